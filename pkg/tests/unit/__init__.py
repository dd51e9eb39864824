"""Unit test package for werblock."""
