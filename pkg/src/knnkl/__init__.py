"""k-nearest-neighbor KL divergence estimation."""
