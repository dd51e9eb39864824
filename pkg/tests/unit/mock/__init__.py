"""File I/O, report and command-line tests."""
