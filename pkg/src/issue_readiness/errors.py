from __future__ import annotations


class IssueReadinessError(Exception):
    """Base class for every error raised by this package."""


class InputError(IssueReadinessError, ValueError):
    """Invalid or insufficient input data (CLI exit code 2)."""


class AnalysisError(IssueReadinessError):
    """An analysis could not be completed on otherwise valid input (CLI exit code 1)."""
