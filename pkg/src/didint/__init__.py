"""Intersection difference-in-differences and comparison estimators."""
