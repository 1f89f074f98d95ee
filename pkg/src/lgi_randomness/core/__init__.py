"""Model, bounds, optimization, certification and simulation."""
