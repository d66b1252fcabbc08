"""
Formatting module for the generation tools.

This module renders evaluation reports as text and CSV files.
"""

from .report_manager import ReportManager

__all__ = [
    'ReportManager'
]
