"""Array capabilities with index translation, plus a checked core calculus."""

__version__ = "0.1.0"
