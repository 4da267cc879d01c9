"""Memetic transfer learning for capacitated routing."""
