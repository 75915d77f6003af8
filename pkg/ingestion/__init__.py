"""Reading and writing clouds, labels and binary matrices."""
