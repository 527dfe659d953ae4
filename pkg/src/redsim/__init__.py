"""redsim: simulate in-network content caching against redundancy elimination
on ISP topologies."""

__version__ = "0.1.0"
