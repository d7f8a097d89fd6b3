"""Exact phase-space simulator and rate optimizer for a hybrid
continuous/discrete-variable quantum repeater built on approximate cat
states: local cat growth, entanglement generation by non-local photon
subtraction, nested entanglement swapping, and fidelity-constrained rate
optimization versus distance.
"""

__version__ = "0.1.0"
