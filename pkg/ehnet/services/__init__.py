"""Numerical services layer"""
