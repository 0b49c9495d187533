"""Keypoint-conditioned GAN: generation, editing, detection, and serving."""

__version__ = "0.1.0"
