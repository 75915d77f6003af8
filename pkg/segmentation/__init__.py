"""Oversegmentation by seeded region growing."""
