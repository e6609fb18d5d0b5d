"""
lincrack CLI Module

Command-line interface for the inspection workflow.
"""

from lincrack.cli.main import cli, main

__all__ = ['cli', 'main']
