"""Tests pour Molecular CT."""
