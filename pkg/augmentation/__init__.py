"""Geometric transforms and augmentation consistency."""
