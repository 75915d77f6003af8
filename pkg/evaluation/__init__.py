"""Training losses and evaluation metrics as pure functions."""
