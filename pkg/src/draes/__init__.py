"""Round-based simulator for RAES / D-RAES overlay maintenance under churn."""

from .adversary import AdversaryModel, ChurnEvent, make_adversary
from .graph import OverlayGraph, Snapshot, sample_uniform
from .harness import ExperimentConfig, Trace, derive_streams, load_trace, run_comparison_norefresh, run_experiment, write_trace
from .metrics import MetricsRecord, cheeger_bounds, compute_metrics, d_core, exact_edge_expansion, lambda2
from .protocol import ProtocolParams, run_bootstrap, run_maintenance_round

__version__ = "0.1.0"
