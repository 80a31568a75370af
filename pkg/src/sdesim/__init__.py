"""Strong and weak SDE simulation: schemes, Levy-area samplers, word algebra."""
__version__ = "0.1.0"
