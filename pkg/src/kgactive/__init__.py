"""Budgeted active learning for entity alignment across two knowledge graphs."""

__version__ = "0.1.0"
