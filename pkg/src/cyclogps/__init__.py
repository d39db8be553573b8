"""GPS C/A acquisition with cyclostatistics, and a recursive sum-of-sinusoids fading emulator."""

__version__ = "0.1.0"
