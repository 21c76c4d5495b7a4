"""Fit road-axis networks (node positions and segment widths) to kerb and object observations."""

from .config import Config, load_config
from .errors import RoadFitError
from .evaluation import EvalReport, evaluate, sample_ground_truth
from .matching import MatchSet, match_and_exclude
from .observation import Observation, ObservationSet, load_observations, prepare_observations
from .pipeline import FitResult, fit
from .postprocess import detect_topology_errors, regroup
from .road_model import RoadNetwork, split_polylines
from .solver import Problem, SolveReport, build_problem, solve, solve_alternating
from .synth import ScenarioSpec, generate

__all__ = [
    "Config", "load_config", "RoadFitError", "EvalReport", "evaluate", "sample_ground_truth", "MatchSet",
    "match_and_exclude", "Observation", "ObservationSet", "load_observations", "prepare_observations",
    "FitResult", "fit", "detect_topology_errors", "regroup", "RoadNetwork", "split_polylines", "Problem",
    "SolveReport", "build_problem", "solve", "solve_alternating", "ScenarioSpec", "generate",
]
__version__ = "0.1.0"
