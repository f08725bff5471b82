"""Workflow-graph based augmentation of annotated surgery videos."""

__version__ = "0.1.0"
