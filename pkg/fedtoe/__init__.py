"""FedTOE: federated learning over delay-constrained uplinks with outage and quantization."""

__version__ = "0.1.0"
