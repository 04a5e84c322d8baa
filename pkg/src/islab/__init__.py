"""Exact, seed-reproducible simulation of Contact, IS and Spont on finite boxes of Z^d."""

__version__ = "0.1.0"
