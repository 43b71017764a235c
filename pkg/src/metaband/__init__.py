"""Zero-shot hyperspectral band selection via meta-learned graph scoring."""

__version__ = "0.1.0"
