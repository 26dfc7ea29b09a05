"""Workbench for the (1+1)-EA on strictly monotone pseudo-Boolean functions.

Instrumented runs, good/bad update classification, exact single-round
oracles, and a reversible backward trace codec with a deterministic length
budget.
"""

from .classifier import Label, candidate_set, classify_update, value
from .codec import (
    DecodeError,
    EncodedTrace,
    budget,
    decode_trajectory,
    encode_trajectory,
    read_trace,
    subset_rank,
    subset_unrank,
    write_trace,
)
from .core import (
    ContractViolation,
    FlipSet,
    ParameterError,
    RngSeed,
    SearchPoint,
    apply,
    sample_flipset_naive,
    sample_flipset_skip,
)
from .engine import RunConfig, Trajectory, UpdateRecord, drift_stats, phase_stats, run
from .entropy import (
    entropy_lower_bound,
    exact_update_distribution,
    log2_binom,
    oracle_report,
    telescoping_check,
    verify_appendixB,
)
from .fitness import (
    CustomPlugin,
    ExponentialWeights,
    LinearWeights,
    MonotoneFunction,
    OneMax,
    check_monotone_exhaustive,
    check_monotone_sampled,
    parse_function,
    random_linear,
    register_plugin,
)

__version__ = "0.1.0"
