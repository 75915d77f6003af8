"""Synthetic ground-truth scenes built from planes, boxes and spheres."""
