"""Discrete-time simulator and learning stack for DNN partitioning, task
offloading, and RSU compute allocation in vehicular edge networks."""

__version__ = "0.1.0"
