"""Time-slotted simulator and schedulers for federated learning over vehicles.

The package couples a synthetic urban radio environment (path loss,
correlated shadowing, SINR-to-bitrate tables, GPR map estimation) with
vehicle mobility, a least-squares federated learning task, and the
three-phase computation/communication/scheduling co-design plus the
benchmark schedulers it is compared against.
"""

__version__ = "0.1.0"
