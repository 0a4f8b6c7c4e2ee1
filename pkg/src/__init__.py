"""Turnpike lab for optimal control problems with Lie-group symmetries."""
