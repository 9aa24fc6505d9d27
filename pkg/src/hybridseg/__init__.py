"""Segmentation of hybrid trajectories with Latent ODEs and PELT."""
__version__ = "0.1.0"
