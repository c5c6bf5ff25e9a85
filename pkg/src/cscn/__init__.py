"""Joint cache allocation and multicast delivery for cloud small-cell networks."""
__version__ = "0.1.0"
