"""Open hybrid automata composition and cascading-failure simulation for Micropolis."""
from .cascade import DependencyGraph, analyze, build_cascade, compute_metrics, extract_events
from .composition import CompositionNetwork, Connection, JunctionBlock
from .core import (
    AutomatonState,
    Mode,
    NoiseSource,
    OpenHybridAutomaton,
    Port,
    Transition,
    enabled_transitions,
    evaluate_outputs,
    integrate_flow,
    step_automaton,
)
from .models import MicropolisParams, make_micropolis
from .scenario import Scenario, Trace, load_scenario, run

__version__ = "0.1.0"
