"""Stiff open-quantum-system laboratory: Lindbladians, elimination, AP steppers."""
__version__ = "0.1.0"
