"""Tract-level daytime population density from census and LODES payroll data."""

__version__ = "0.1.0"
