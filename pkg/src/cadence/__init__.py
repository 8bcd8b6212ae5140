"""Alzheimer's dementia detection pipelines from speech and transcripts."""

__version__ = "0.1.0"
