"""Accelerated advection-diffusion: dissipation times, dyadic schedules and decay checks."""

from .field import GridSpec, ScalarField, h1_norm, inner_product, l2_norm, random_field, sobolev_norm
from .flows import FlowSpec, ShearProfile, SyntheticTauModel, sup_norm, velocity_at
from .solver import SolveParams, apply_phi, apply_phi_adjoint, diffuse
from .dissipation import TauTable, build_tau_table, dissipation_time, mixing_rate, operator_norm
from .schedule import Envelope, Schedule, build_stages, envelope_eval, envelope_invert, sigma_eval
from .runner import arbitrary_start_check, plan_stages, run_stage, verify_total_dissipation

__all__ = [
    "GridSpec", "ScalarField", "h1_norm", "inner_product", "l2_norm", "random_field", "sobolev_norm",
    "FlowSpec", "ShearProfile", "SyntheticTauModel", "sup_norm", "velocity_at",
    "SolveParams", "apply_phi", "apply_phi_adjoint", "diffuse",
    "TauTable", "build_tau_table", "dissipation_time", "mixing_rate", "operator_norm",
    "Envelope", "Schedule", "build_stages", "envelope_eval", "envelope_invert", "sigma_eval",
    "arbitrary_start_check", "plan_stages", "run_stage", "verify_total_dissipation",
]
