"""Dilute Bose gases with three-body interactions."""
