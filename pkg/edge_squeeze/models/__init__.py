"""Package with all models (data containers) used by Edge Squeeze."""
