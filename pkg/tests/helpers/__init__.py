"""Test helpers for werblock: brute-force oracles and assertion helpers."""
