"""Interaction-topology identification for open multi-agent systems."""

from .clustering import agglomerative_cluster, cluster_modes, dissimilarity, segment_operator
from .estimation import ModeEstimate, aggregate_mode, estimation_error
from .excitation import ExcitationConfig, build_excitation
from .model import ModeSpec, Scenario, SwitchingSchedule, graph_from_matrix, mode_at, validate_scenario
from .pipeline import PipelineReport, evaluate_labels, run_two_stage
from .preset import gen_paper_preset
from .simulator import SegmentRecord, interval_estimate, simulate_scenario

__version__ = "0.1.0"
