"""File formats and helpers"""
