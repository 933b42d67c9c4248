"""Particle filters with efficient importance sampling and mode tracking."""

from ._core import (
    ConfigError,
    FilterSpec,
    Model,
    NumericalError,
    certify,
    chernoff_tail_bound,
    choose_mrr,
    choose_vts_single,
    delta_star,
    energy,
    find_mode,
    grad_energy,
    kalman_filter,
    ol_multimodal_prob,
    onfly_default_threshold,
    run_experiment,
    run_filter,
    simulate,
    trace_proof_bound,
    trace_threshold,
    vp_tail_bound,
)

__all__ = [name for name in dir() if not name.startswith("_")]
