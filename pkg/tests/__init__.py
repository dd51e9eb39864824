"""werblock test suite."""
