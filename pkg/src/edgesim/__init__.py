"""Discrete-event edge/cloud offloading simulator with rule-based and DDQN orchestrators."""

__version__ = "0.1.0"
