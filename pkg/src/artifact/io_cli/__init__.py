"""File formats, benchmark builders and the command-line interface."""
