"""Schemas and tensor containers"""
