"""Runtime settings shared by entry points."""
