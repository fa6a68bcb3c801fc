"""Quasipotentials, Green's functions and large-deviation diagnostics for lattice walks."""

from .cgf import legendre, m_c, phi, sphere_max
from .diagnostics import cutoff_k, cutoff_kappa, ldp_scan, localization_scan
from .green import (
    GreenQuery,
    MemoryCapError,
    TargetSet,
    green_full,
    green_truncated,
    localization_gap,
    scaled_measure,
)
from .model import (
    JumpDistribution,
    ModelError,
    StateSpace,
    WalkModel,
    communication_theta,
    drift,
    load_model,
    load_model_file,
    nearest_neighbor,
    serialize_model,
)
from .montecarlo import SamplerConfig, mc_green, mc_hitting
from .quasipotential import (
    QuasipotentialError,
    identity_suite,
    quasipotential,
    quasipotential_inf_t,
    quasipotential_support,
    rate_finite_t,
)

__version__ = "0.1.0"

__all__ = [
    "phi", "legendre", "sphere_max", "m_c",
    "JumpDistribution", "WalkModel", "StateSpace", "ModelError",
    "nearest_neighbor", "drift", "load_model", "load_model_file", "serialize_model",
    "communication_theta",
    "quasipotential", "quasipotential_support", "quasipotential_inf_t", "rate_finite_t",
    "identity_suite", "QuasipotentialError",
    "TargetSet", "GreenQuery", "green_truncated", "green_full", "scaled_measure",
    "localization_gap", "MemoryCapError",
    "SamplerConfig", "mc_green", "mc_hitting",
    "ldp_scan", "cutoff_kappa", "cutoff_k", "localization_scan",
]
