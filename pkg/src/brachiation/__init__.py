"""Two-link underactuated brachiation robot: simulation, trajectory
optimization, tracking control, behavior sequencing, and benchmarking."""

__version__ = "0.1.0"
