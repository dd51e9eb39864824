"""Logic tests for the numerical core."""
