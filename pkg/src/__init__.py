"""Package Molecular CT."""
