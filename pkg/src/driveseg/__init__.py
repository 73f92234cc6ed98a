"""Ordinal driveability segmentation toolkit."""

__version__ = "0.1.0"
CHECKPOINT_FORMAT = "driveseg-checkpoint/1"
