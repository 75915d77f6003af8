"""Learning-based region merging and pseudo-label self-training."""
