"""Planning, control and simulation for multi-robot cable-suspended transport."""

__version__ = "0.1.0"
