"""Spatial interpolation of variable-annuity portfolio delta."""
