"""Intelligent floor-field cellular automaton for pedestrian evacuation."""

from .engine import (
    ProbVector,
    Proposal,
    RunResult,
    SimState,
    resample_if_occupied,
    resolve_conflicts,
    run,
    select_target,
    step,
    transition_probabilities,
)
from .fields import StaticField, build_static_field, bump_trace, decay_diffuse
from .metrics import BatchStats, direction_frequencies, mode_of_times, track_heatmap
from .params import ConflictRule, Params
from .perception import PerceptionTerm, movement_term, obstacle_distance
from .scenario import (
    Direction,
    Grid,
    RandomPlacement,
    Scenario,
    ScenarioError,
    load_scenario,
    parse_scenario,
    place_pedestrians,
    serialize_scenario,
)

__version__ = "0.1.0"
