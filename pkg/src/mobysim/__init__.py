"""Trace-driven DTN routing in a space of location-visit patterns."""

from .contact import OccupancyIndex, build_index, contact_events, neighbors
from .engine import (Bundle, ExperimentConfig, RunConfig, RunResult, generate_workload,
                     learning_experiment, run_experiment, run_simulation)
from .metrics import confidence_interval, delivery_cdf, summarize_run
from .mobyspace import (MobyPoint, PatternWindow, compute_pattern, distance, prediction_error,
                        relative_entropy, truncate)
from .trace import (SyntheticConfig, Trace, generate_synthetic, parse_sessions, read_sessions,
                    select_users, trace_statistics, traffic_sources)

__version__ = "0.1.0"
