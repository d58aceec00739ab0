"""Numerical lab for the dipolar GP equation, its N-scaled form and the Bogoliubov apparatus."""

__version__ = "0.1.0"
