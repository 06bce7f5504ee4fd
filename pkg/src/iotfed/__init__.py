"""Hierarchical IoT traffic simulation with federated autoencoder anomaly detection.

Subpackages cover the full pipeline: network model and routing
(:mod:`iotfed.nodes`), discrete-event packet simulation
(:mod:`iotfed.simkernel`), redirection-attack catalogue
(:mod:`iotfed.attacks`), device log grammar (:mod:`iotfed.logfmt`),
windowed feature extraction (:mod:`iotfed.features`), dense autoencoder
(:mod:`iotfed.autoencoder`), federated averaging (:mod:`iotfed.federated`),
threshold detection and metrics (:mod:`iotfed.detect`), and experiment
orchestration (:mod:`iotfed.harness`).
"""

__version__ = "0.1.0"
