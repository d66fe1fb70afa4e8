"""Medical information annotation and extraction toolkit."""

__version__ = "0.1.0"
