"""Sensory-gated protection and control for an islanded microgrid.

A fast reflex layer proposes protection actions; a supervisor classifies
precursor disturbances and a gate either damps (inhibits) or amplifies
(facilitates) the reflex before anything reaches the plant.
"""

from __future__ import annotations

from .engine import evaluate, run, run_batch, train
from .gate import GateParams, gate, gating_factor, synthesize_commands
from .plant import PlantParams, PlantState, SecondaryCommand, advance, initial_state, step
from .reflex import Reflex, ReflexLimits, hard_override
from .report import KpiReport, Trace, compare, compute_kpis, emit, load_trace
from .scenario import (ScenarioSpec, generate_ppf_suite, generate_ppi_suite,
                       generate_separable_suite)
from .supervisor import PolicyState, SupervisoryDecision, classify, decide
from .telemetry import FeatureVector, detect_event, extract_features

__version__ = "0.1.0"
