"""Resolved-geometry verification sweeps.

Each sweep realizes the random fissure field at a ladder of lattice scales,
evaluates a resolved quantity, and measures its distance from the averaged
limit law.  Four sweeps are provided:

  measure   volume integrals over the tube union against the surface-density
            limit h <q^2> integral over the mid-plane
  energy    the three scaled energy pieces of a constant trial velocity
            (tangential drag, vertical drag, slip) against their limit
            functionals
  profile   the fundamental solution pair of the tube transport equation
            against the averaged cosh/sinh profiles
  exchange  resolved interface fluxes against the closed-form transmission
            coefficients

Summaries report per-scale medians and interquartile ranges over independent
realizations; the acceptance checks gate on those medians.  Realizations are
seeded through the deterministic stream splitter, so every sweep is exactly
reproducible from (seed, trial).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from ._numerics import (derive_seed, fit_loglog_slope, panel_quadrature,
                        sym_inv_sqrt, uniform_from_hash)
from .cell import DragCell, compute_kstar, solve_stokes_cell
from .fissure_transport import (FissureODEConfig, PairBrackets,
                                fine_interface_fluxes, limit_comparison,
                                pair_brackets, transmission_coeffs)
from .fissures import (Fissure, GeometryParams, HalfPaths, enumerate_fissures,
                       fissure_volume_integral, surface_integral)
from .stochastic import (ErgodicStats, PhaseSequence, ProcessParams,
                         build_path, estimate_brackets)

# Default processes for the sweeps.  The aperture stays in (0.3, 0.7) so the
# non-overlap hypothesis holds with the +-0.05 centerline and +-0.3 phases.
APERTURE_DEFAULT = ProcessParams(
    kind="aperture_q", mean=0.5, amplitudes=(0.08, 0.05),
    frequencies=(1.0, math.sqrt(2.0)), seed=7,
    lower_bound=0.3, upper_bound=0.7, deriv_bound=0.25)
# Faster oscillation for the single-tube ladders: at eps = 0.1 the slow
# default barely completes one stretched period across the layer, which
# hides the averaging trend the ladder is supposed to expose.
APERTURE_FAST = replace(APERTURE_DEFAULT,
                        frequencies=(2.0, 2.0 * math.sqrt(2.0)),
                        seed=11, deriv_bound=2.0)
CENTERLINE_DEFAULT = ProcessParams(
    kind="centerline_r", mean=0.0, amplitudes=(0.05,),
    frequencies=(0.618,), seed=13)
PHASE_BOUND = 0.3


@dataclass(frozen=True)
class SweepSummary:
    """Per-scale medians and spreads of one convergence sweep."""

    name: str
    eps_values: tuple[float, ...]
    n_realizations: int
    metric_names: tuple[str, ...]
    medians: dict[str, tuple[float, ...]]
    iqrs: dict[str, tuple[float, ...]]
    rows: tuple[dict, ...]

    def strictly_decreasing(self, metric: str) -> bool:
        m = self.medians[metric]
        return all(b < a for a, b in zip(m, m[1:]))

    def final_median(self, metric: str) -> float:
        return self.medians[metric][-1]

    def slope(self, metric: str) -> float:
        """log-log rate of the medians against eps (positive = converging)."""
        return fit_loglog_slope(self.eps_values, self.medians[metric])


def _summarize(name: str, eps_values, metric_names, rows,
               n_realizations: int) -> SweepSummary:
    medians = {}
    iqrs = {}
    for key in metric_names:
        med = []
        iqr = []
        for eps in eps_values:
            vals = np.array([r[key] for r in rows if r["eps"] == eps])
            med.append(float(np.median(vals)))
            q1, q3 = np.percentile(vals, [25.0, 75.0])
            iqr.append(float(q3 - q1))
        medians[key] = tuple(med)
        iqrs[key] = tuple(iqr)
    return SweepSummary(name=name, eps_values=tuple(float(e) for e in eps_values),
                        n_realizations=n_realizations,
                        metric_names=tuple(metric_names),
                        medians=medians, iqrs=iqrs, rows=tuple(rows))


@functools.lru_cache(maxsize=8)
def reference_stats(params_q: ProcessParams,
                    params_r: ProcessParams | None = None,
                    T: float = 2.0e4) -> ErgodicStats:
    """Long-run path averages used as the limit constants of the sweeps."""
    q = build_path(params_q)
    r = build_path(params_r) if params_r is not None else None
    return estimate_brackets(q, T, r_path=r)


def _draw_paths(seed: int, trial: int, params_q: ProcessParams,
                params_r: ProcessParams, phase_bound: float):
    """Fresh process realization and phase sequence for one trial."""
    q = build_path(replace(params_q, seed=derive_seed(seed, trial, 1)))
    r = build_path(replace(params_r, seed=derive_seed(seed, trial, 2)))
    phases = PhaseSequence(bound=phase_bound, seed=derive_seed(seed, trial, 3))
    return q, r, phases


def _single_fissure(geometry: GeometryParams, q_path, r_path,
                    phases: PhaseSequence, i: int = 3, j: int = 5) -> Fissure:
    """One tube of the field, built without enumerating the whole lattice."""
    line_i = HalfPaths(q_path, r_path, float(phases.alpha(i)),
                       float(phases.beta(i)))
    line_j = HalfPaths(q_path, r_path, float(phases.alpha(j)),
                       float(phases.beta(j)))
    return Fissure(i=i, j=j, geometry=geometry, line_x1=line_i,
                   line_x2=line_j)


def measure_limit_sweep(eps_values=(1 / 8, 1 / 16, 1 / 32, 1 / 64),
                        n_realizations: int = 20, seed: int = 2026,
                        theta: float = 0.5, height: float = 1.0,
                        params_q: ProcessParams = APERTURE_FAST,
                        params_r: ProcessParams = CENTERLINE_DEFAULT,
                        phase_bound: float = PHASE_BOUND) -> SweepSummary:
    """Tube-union volume integrals against the surface-density limit.

    Test functions: the constant 1 and the coordinate x1.  The dominant
    finite-scale error is the uncovered boundary ring of width eps, so the
    medians fall like 2 eps down to the small phase-average bias.  The
    fast aperture variant keeps that bias (common-mode across fissures,
    decaying only like the stretched window length) well below the ring
    term on the default ladder.
    """
    stats = reference_stats(params_q, params_r)
    tests = {
        "rel_err_const": lambda x1, x2, x3: np.ones_like(np.asarray(x1)),
        "rel_err_linear": lambda x1, x2, x3: np.asarray(x1),
    }
    rows: list[dict] = []
    for eps in eps_values:
        geometry = GeometryParams(epsilon=eps, theta=theta, height=height)
        limits = {key: height * stats.mean_q2
                  * surface_integral(geometry, phi)
                  for key, phi in tests.items()}
        for trial in range(n_realizations):
            q, r, phases = _draw_paths(seed, trial, params_q, params_r,
                                       phase_bound)
            fissures = enumerate_fissures(geometry, q, r, phases)
            row = {"eps": eps, "trial": trial, "n_fissures": len(fissures)}
            for key, phi in tests.items():
                vol = fissure_volume_integral(fissures, phi)
                row[key] = abs(vol - limits[key]) / abs(limits[key])
            rows.append(row)
    return _summarize("measure", eps_values, tuple(tests), rows,
                      n_realizations)


def _pair_averages(fissures: list[Fissure], panels_per_period: float = 6.0):
    """Per-fissure height averages of the aperture product, its reciprocal,
    and the product at the interface plane."""
    geo = fissures[0].geometry
    h = geo.height
    max_freq = max(f.line_x1.q.max_frequency for f in fissures)
    rate = max_freq * geo.epsilon ** (-geo.theta)
    n_panels = max(4, int(math.ceil(panels_per_period * h * rate
                                    / (2.0 * math.pi))))
    x3, w = panel_quadrature(-h, 0.0, n_panels, order=6)
    s = geo.stretched_depth(x3)
    F = len(fissures)
    qbar = np.empty(F)
    rbar = np.empty(F)
    q0 = np.empty(F)
    for k, f in enumerate(fissures):
        qq = np.asarray(f.line_x1.width(s) * f.line_x2.width(s), dtype=float)
        qbar[k] = qq @ w / h
        rbar[k] = (1.0 / qq) @ w / h
        q0[k] = float(f.line_x1.width(0.0)) * float(f.line_x2.width(0.0))
    return qbar, rbar, q0


def energy_density_sweep(eps_values=(1 / 8, 1 / 16, 1 / 32, 1 / 64),
                         n_realizations: int = 20, seed: int = 2027,
                         theta: float = 0.5, height: float = 1.0,
                         test_field=(0.7, -0.4, 0.9),
                         mu_fissure: float = 0.05, slip_gamma: float = 0.05,
                         k_plus: float = 1.3, k_minus: float = 0.8,
                         params_q: ProcessParams = APERTURE_FAST,
                         params_r: ProcessParams = CENTERLINE_DEFAULT,
                         phase_bound: float = PHASE_BOUND,
                         drag: DragCell | None = None) -> SweepSummary:
    """Scaled fissure energy of a constant trial velocity against its limit.

    Per fissure the three pieces are

        tangential  mu_f eps^2 h (Qbar / <q>^2) c . G c,  c = K_f^{-1} v_tau
        vertical    mu_f eps^2 h (Qbar Rbar / k0) v3^2
        slip        gamma eps^2 q_i(0) q_j(0)  B v_tau . v_tau

    with B the sum of the inverse square roots of the two mid-plane
    permeability footprints.  The limit replaces the lattice sums by
    <q^2> |Sigma| and the per-tube averages by the process brackets.  The
    drag tensor and k0 appear identically on both sides, so the reported
    error probes only the geometry averaging, not the cell solve.

    The gated metric is the total relative error: the interface product
    q_i(0) q_j(0) is ensemble-correct but does not self-average along the
    lattice (all tubes sample the aperture inside one phase window), so the
    slip piece alone carries a realization-dependent offset.  With the
    default weights that offset is a small fraction of the total and the
    uncovered boundary ring dominates the trend.
    """
    stats = reference_stats(params_q, params_r)
    cell = drag if drag is not None else solve_stokes_cell(96)
    k0 = cell.k0
    v_tau = np.asarray(test_field[:2], dtype=float)
    v3 = float(test_field[2])
    c = np.linalg.solve(cell.K_f, v_tau)
    tan_coeff = float(c @ cell.gram @ c)
    slip_mat = np.zeros((2, 2))
    for k_bed in (k_plus, k_minus):
        slip_mat += sym_inv_sqrt(compute_kstar(stats, k_bed)[:2, :2])
    slip_coeff = float(v_tau @ slip_mat @ v_tau)

    area = 1.0  # unit mid-plane rectangle
    lim_tan = mu_fissure * height * stats.mean_q2 / stats.mean_q ** 2 \
        * tan_coeff * area
    lim_vert = mu_fissure * height * stats.mean_q2 * stats.mean_inv_q2 \
        / k0 * v3 ** 2 * area
    lim_slip = slip_gamma * stats.mean_q2 * slip_coeff * area
    lim_total = lim_tan + lim_vert + lim_slip

    rows: list[dict] = []
    for eps in eps_values:
        geometry = GeometryParams(epsilon=eps, theta=theta, height=height)
        for trial in range(n_realizations):
            q, r, phases = _draw_paths(seed, trial, params_q, params_r,
                                       phase_bound)
            fissures = enumerate_fissures(geometry, q, r, phases)
            qbar, rbar, q0 = _pair_averages(fissures)
            e_tan = mu_fissure * height * eps * eps \
                / stats.mean_q ** 2 * tan_coeff * float(np.sum(qbar))
            e_vert = mu_fissure * height * eps * eps / k0 * v3 ** 2 \
                * float(np.sum(qbar * rbar))
            e_slip = slip_gamma * eps * eps * slip_coeff * float(np.sum(q0))
            rows.append({
                "eps": eps, "trial": trial, "n_fissures": len(fissures),
                "rel_err_total": abs(e_tan + e_vert + e_slip - lim_total)
                / lim_total,
                "energy_tangential": e_tan, "energy_vertical": e_vert,
                "energy_slip": e_slip, "limit_tangential": lim_tan,
                "limit_vertical": lim_vert, "limit_slip": lim_slip,
            })
    return _summarize("energy", eps_values, ("rel_err_total",), rows,
                      n_realizations)


def limit_profile_sweep(eps_values=(1e-1, 1e-2, 1e-3),
                        n_realizations: int = 20, seed: int = 2028,
                        theta: float = 0.5, height: float = 1.0,
                        diffusion: float = 1.0, reaction: float = 1.0,
                        params_q: ProcessParams = APERTURE_FAST,
                        params_r: ProcessParams = CENTERLINE_DEFAULT,
                        phase_bound: float = PHASE_BOUND,
                        bracket_T: float = 2.0e3) -> SweepSummary:
    """Fundamental pair of the tube equation against the averaged profiles.

    Zero drift by construction: the averaged limit is only stated for the
    reaction-diffusion balance.  The per-tube brackets drive the comparison,
    so the errors measure the finite-scale averaging alone.
    """
    metric_names = ("err_w", "err_z", "err_w_flux", "err_z_flux")
    rows: list[dict] = []
    for trial in range(n_realizations):
        q, r, phases = _draw_paths(seed, trial, params_q, params_r,
                                   phase_bound)
        brackets: PairBrackets | None = None
        for eps in eps_values:
            geometry = GeometryParams(epsilon=eps, theta=theta, height=height)
            fissure = _single_fissure(geometry, q, r, phases)
            cfg = FissureODEConfig(fissure, diffusion=diffusion,
                                   reaction=reaction)
            if brackets is None:
                # The stretched product path does not depend on eps, so one
                # bracket estimate serves the whole ladder.
                brackets = pair_brackets(cfg, T=bracket_T)
            comp = limit_comparison(cfg, brackets)
            rows.append({"eps": eps, "trial": trial,
                         "err_w": comp.err_w, "err_z": comp.err_z,
                         "err_w_flux": comp.err_w_flux,
                         "err_z_flux": comp.err_z_flux})
    return _summarize("profile", eps_values, metric_names, rows,
                      n_realizations)


def limit_profile_constant_gap(q0: float = 0.5, height: float = 1.0,
                               diffusion: float = 0.9, reaction: float = 1.3,
                               eps: float = 0.01, theta: float = 0.5) -> float:
    """Largest of the four profile distances for a constant aperture, where
    the averaged limit is exact."""
    fissure = _constant_fissure(q0, height, eps, theta)
    cfg = FissureODEConfig(fissure, diffusion=diffusion, reaction=reaction)
    brackets = PairBrackets(mean_qq=q0 * q0, mean_inv_qq=1.0 / (q0 * q0))
    comp = limit_comparison(cfg, brackets)
    return float(np.max(comp.as_array()))


def _constant_fissure(q0: float, height: float, eps: float,
                      theta: float) -> Fissure:
    geometry = GeometryParams(epsilon=eps, theta=theta, height=height)
    q = build_path(ProcessParams(kind="constant", mean=q0))
    r = build_path(ProcessParams(kind="constant", mean=0.0))
    line = HalfPaths(q, r, 0.0, 0.0)
    return Fissure(i=0, j=0, geometry=geometry, line_x1=line, line_x2=line)


def flux_exchange_sweep(eps_values=(1e-1, 1e-2, 1e-3),
                        n_realizations: int = 20, seed: int = 2029,
                        theta: float = 0.5, height: float = 1.0,
                        params_q: ProcessParams = APERTURE_FAST,
                        params_r: ProcessParams = CENTERLINE_DEFAULT,
                        phase_bound: float = PHASE_BOUND,
                        bracket_T: float = 2.0e3) -> SweepSummary:
    """Resolved interface fluxes against the transmission coefficients.

    Each trial draws a diffusivity, reaction rate and trace pair, solves the
    resolved layer, and compares both downward fluxes with the closed form
    built from the per-tube brackets.  The traces are kept separated so the
    reference fluxes stay away from zero.
    """
    metric_names = ("rel_err_top", "rel_err_bottom")
    rows: list[dict] = []
    for trial in range(n_realizations):
        diffusion = float(0.7 + 0.8 * uniform_from_hash(seed, trial, 11))
        reaction = float(0.2 + 2.0 * uniform_from_hash(seed, trial, 12))
        u_plus = float(1.0 + 0.5 * uniform_from_hash(seed, trial, 13))
        u_minus = float(0.4 * uniform_from_hash(seed, trial, 14))
        q, r, phases = _draw_paths(seed, trial, params_q, params_r,
                                   phase_bound)
        brackets: PairBrackets | None = None
        for eps in eps_values:
            geometry = GeometryParams(epsilon=eps, theta=theta, height=height)
            fissure = _single_fissure(geometry, q, r, phases)
            cfg = FissureODEConfig(fissure, diffusion=diffusion,
                                   reaction=reaction)
            if brackets is None:
                brackets = pair_brackets(cfg, T=bracket_T)
                coeffs = transmission_coeffs(
                    diffusion, reaction, 0.0, height,
                    brackets.mean_qq, brackets.mean_inv_qq)
            top, bottom = fine_interface_fluxes(cfg, u_plus, u_minus)
            ref_top = coeffs.flux_top(u_plus, u_minus)
            ref_bottom = coeffs.flux_bottom(u_plus, u_minus)
            rows.append({"eps": eps, "trial": trial,
                         "rel_err_top": abs(top - ref_top) / abs(ref_top),
                         "rel_err_bottom": abs(bottom - ref_bottom)
                         / abs(ref_bottom)})
    return _summarize("exchange", eps_values, metric_names, rows,
                      n_realizations)


def flux_exchange_constant_gap(q0: float = 0.5, height: float = 1.0,
                               diffusion: float = 0.9, reaction: float = 1.3,
                               u_plus: float = 1.2, u_minus: float = 0.3,
                               eps: float = 0.01, theta: float = 0.5) -> float:
    """Largest relative flux gap for a constant aperture (closed form is
    exact there)."""
    fissure = _constant_fissure(q0, height, eps, theta)
    cfg = FissureODEConfig(fissure, diffusion=diffusion, reaction=reaction)
    coeffs = transmission_coeffs(diffusion, reaction, 0.0, height,
                                 q0 * q0, 1.0 / (q0 * q0))
    top, bottom = fine_interface_fluxes(cfg, u_plus, u_minus)
    ref_top = coeffs.flux_top(u_plus, u_minus)
    ref_bottom = coeffs.flux_bottom(u_plus, u_minus)
    return max(abs(top - ref_top) / abs(ref_top),
               abs(bottom - ref_bottom) / abs(ref_bottom))


_SWEEPS = {
    "measure": measure_limit_sweep,
    "energy": energy_density_sweep,
    "profile": limit_profile_sweep,
    "exchange": flux_exchange_sweep,
}


def run_sweep(name: str, **kwargs) -> SweepSummary:
    """Dispatch one named sweep with keyword overrides."""
    try:
        fn = _SWEEPS[name]
    except KeyError:
        raise ValueError(f"unknown sweep {name!r}; choose from "
                         f"{sorted(_SWEEPS)}") from None
    return fn(**kwargs)
