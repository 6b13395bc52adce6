"""Quality-aware, incentive-driven federated learning simulator for honeypot intrusion logs."""

__version__ = "0.1.0"
