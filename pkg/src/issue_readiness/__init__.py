"""Score GitHub issues for AI-agent readiness and model pull-request merge outcomes."""

__version__ = "0.1.0"
