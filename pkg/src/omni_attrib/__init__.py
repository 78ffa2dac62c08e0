"""Reference-guided identity attribution and social-reasoning pipeline toolkit."""

__version__ = "0.1.0"
