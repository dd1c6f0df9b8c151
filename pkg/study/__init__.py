"""Desk-scale evaluation runs for band_chase."""
