"""Rubric-based LLM grading of UML class diagrams with TA alignment metrics."""

__version__ = "0.1.0"
