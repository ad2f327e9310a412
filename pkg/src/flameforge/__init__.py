"""flameforge: mask-guided wildfire image synthesis with paired ground truth."""

__version__ = "0.1.0"
