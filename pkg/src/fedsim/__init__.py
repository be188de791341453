"""fedsim: deterministic discrete-event simulation of multi-cluster federations.

Declarative cluster provisioning, peer-to-peer federation with virtual nodes
and workload offloading, an overlay network with address translation, and a
timestamped streaming pipeline for end-to-end latency experiments.
"""

from .config import ScenarioConfig, load_config, parse_config
from .engine import Dist, Engine, constant, fit_lognormal_sigma, lognormal, uniform
from .errors import ConfigError, FedsimError
from .federation import FederationManager
from .lifecycle import ClusterManager, ClusterPhase, ClusterSpec, Flavor, PROFILES
from .network import FlowRecord, Network
from .pipeline import PipelineSpec, StreamingPipeline, UsageMonitor
from .report import RunReport, export_samples, export_summary, parse_summary
from .runner import RunResult, run_scenario
from .scheduler import PlacementPolicy, Scheduler
from .stats import evaluate_qos, percentile

__version__ = "0.1.0"

__all__ = [
    "ClusterManager",
    "ClusterPhase",
    "ClusterSpec",
    "ConfigError",
    "Dist",
    "Engine",
    "FedsimError",
    "FederationManager",
    "Flavor",
    "FlowRecord",
    "Network",
    "PROFILES",
    "PipelineSpec",
    "PlacementPolicy",
    "RunReport",
    "RunResult",
    "ScenarioConfig",
    "Scheduler",
    "StreamingPipeline",
    "UsageMonitor",
    "constant",
    "evaluate_qos",
    "export_samples",
    "export_summary",
    "fit_lognormal_sigma",
    "load_config",
    "lognormal",
    "parse_config",
    "parse_summary",
    "percentile",
    "run_scenario",
    "uniform",
    "__version__",
]
