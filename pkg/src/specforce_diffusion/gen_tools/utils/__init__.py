"""
Utilities module for the generation tools.

This module contains utility functionality like logging and seed streams.
"""

from .log_manager import LogManager, get_log_manager
from .seeding import derive_rng, stream_key

__all__ = [
    'LogManager',
    'get_log_manager',
    'derive_rng',
    'stream_key'
]
