"""Coupled transport solver: exact columns, manufactured fields, and the
interface exchange behavior."""

import math

import numpy as np
import pytest

from fisshom._numerics import fit_loglog_slope
from fisshom.fissure_transport import transmission_coeffs
from fisshom.limit_transport import (
    TransportConfig,
    mass_balance_gap,
    solve_limit_transport,
)
from fisshom.stochastic import constant_stats

STATS = constant_stats(0.5)
LAYER = dict(height=0.8, mean_qq=0.25, mean_inv_qq=4.2)


def exchange(reaction=0.0, v3=0.0, diffusion=1.0):
    return transmission_coeffs(diffusion, reaction, v3, **LAYER)


def base_config(**kw):
    defaults = dict(
        diff_plus=(1.0, 1.0, 1.0),
        diff_minus=(0.8, 0.8, 1.2),
        exchange=exchange(),
        stats=STATS,
        height=0.8,
        depth_plus=1.0,
        depth_minus=1.0,
        shape=(6, 6, 6, 6),
    )
    defaults.update(kw)
    return TransportConfig(**defaults)


def test_config_validation():
    with pytest.raises(ValueError, match="reactions"):
        base_config(reaction_plus=-1.0)
    with pytest.raises(ValueError, match="porosity"):
        base_config(cell_porosity=1.5)
    with pytest.raises(ValueError, match="diagonal"):
        base_config(diff_plus=np.array([[1.0, 0.2, 0.0],
                                        [0.2, 1.0, 0.0],
                                        [0.0, 0.0, 1.0]]))
    with pytest.raises(ValueError, match="2 cells"):
        base_config(shape=(1, 6, 6, 6))


def test_uniform_state_is_exact():
    cfg = base_config(bc_plus=1.0, bc_minus=1.0)
    sol = solve_limit_transport(cfg)
    assert np.max(np.abs(sol.u_plus - 1.0)) < 1e-12
    assert np.max(np.abs(sol.u_minus - 1.0)) < 1e-12
    top, bottom = sol.exchange_fluxes()
    assert np.max(np.abs(top)) < 1e-12
    assert np.max(np.abs(bottom)) < 1e-12
    assert mass_balance_gap(sol) < 1e-12


def column_exact(cfg, u_top, u_bot):
    """Piecewise-linear series-resistance column (no reaction, no drift)."""
    dp = cfg.diff_plus[2]
    dm = cfg.diff_minus[2]
    c = cfg.exchange.exchange_scale
    J = (u_top - u_bot) / (cfg.depth_plus / dp + 1.0 / c
                           + cfg.depth_minus / dm)
    a_plus = u_top - J / dp * 0.0 - J / dp * (-cfg.depth_plus) * 0.0
    # u_plus(z) = trace + (J/dp) z with u_plus(H+) = u_top
    trace_p = u_top - (J / dp) * cfg.depth_plus
    trace_m = trace_p - J / c
    u_plus = lambda z: trace_p + (J / dp) * z
    u_minus = lambda z: trace_m + (J / dm) * (z + cfg.height)
    del a_plus
    return J, u_plus, u_minus


def test_series_resistance_column_exact():
    cfg = base_config(shape=(4, 4, 7, 5))
    u_top, u_bot = 1.0, 0.2
    J, up_e, um_e = column_exact(cfg, u_top, u_bot)
    bc_p = lambda x1, x2, x3: up_e(x3)
    bc_m = lambda x1, x2, x3: um_e(x3)
    sol = solve_limit_transport(base_config(shape=(4, 4, 7, 5),
                                            bc_plus=bc_p, bc_minus=bc_m))
    zp = cfg.vertex_axes("plus")[2]
    zm = cfg.vertex_axes("minus")[2]
    assert np.max(np.abs(sol.u_plus - up_e(zp)[None, None, :])) < 1e-10
    assert np.max(np.abs(sol.u_minus - um_e(zm)[None, None, :])) < 1e-10
    top, bottom = sol.exchange_fluxes()
    assert np.max(np.abs(top - J)) < 1e-10
    assert np.max(np.abs(bottom - J)) < 1e-10
    assert mass_balance_gap(sol) < 1e-12


def mms_setup(cfg):
    """Manufactured trig-by-polynomial pair with surface sources closing the
    interface balances; no advection so the scheme stays second order."""
    h = cfg.height
    dp = cfg.diff_plus
    dm = cfg.diff_minus
    rp, rm = cfg.reaction_plus, cfg.reaction_minus
    ex = cfg.exchange
    ds = cfg.surface_diffusion
    sscale = cfg.surface_scale
    pi = math.pi

    phi = lambda x1, x2: np.cos(pi * x1) * np.cos(pi * x2)
    psi_p = lambda z: 0.4 + 0.3 * z + 0.6 * z ** 2
    dpsi_p = lambda z: 0.3 + 1.2 * z
    psi_m = lambda z: 0.7 - 0.2 * (z + h) + 0.5 * (z + h) ** 2
    dpsi_m = lambda z: -0.2 + 1.0 * (z + h)

    u_p = lambda x1, x2, x3: phi(x1, x2) * psi_p(x3)
    u_m = lambda x1, x2, x3: phi(x1, x2) * psi_m(x3)

    def f_p(x1, x2, x3):
        lap = -(dp[0] + dp[1]) * pi ** 2 * psi_p(x3) + dp[2] * 1.2
        return (phi(x1, x2) * (-lap + rp * psi_p(x3))) / cfg.cell_porosity

    def f_m(x1, x2, x3):
        lap = -(dm[0] + dm[1]) * pi ** 2 * psi_m(x3) + dm[2] * 1.0
        return phi(x1, x2) * (-lap + rm * psi_m(x3))

    tr_p, tr_m = psi_p(0.0), psi_m(-h)
    j_top = ex.exchange_scale * (ex.cosh_factor * tr_p
                                 - ex.advective_factor * tr_m)
    j_bot = ex.exchange_scale * (tr_p - ex.advective_factor
                                 * ex.cosh_factor * tr_m)

    def s_plus(x1, x2):
        surf = sscale * (ds[0] + ds[1]) * pi ** 2 * tr_p
        return phi(x1, x2) * (-dp[2] * dpsi_p(0.0) + surf + j_top)

    def s_minus(x1, x2):
        return phi(x1, x2) * (dm[2] * dpsi_m(-h) - j_bot)

    return u_p, u_m, f_p, f_m, s_plus, s_minus


def test_mms_convergence_order():
    errs = []
    sizes = [6, 12, 24]
    for n in sizes:
        cfg = base_config(
            shape=(n, n, n, n),
            reaction_plus=0.7,
            reaction_minus=0.4,
            surface_diffusion=(0.3, 0.5),
            exchange=exchange(reaction=1.1, v3=0.4),
            cell_porosity=0.9,
        )
        u_p, u_m, f_p, f_m, s_p, s_m = mms_setup(cfg)
        cfg = base_config(
            shape=(n, n, n, n),
            reaction_plus=0.7,
            reaction_minus=0.4,
            surface_diffusion=(0.3, 0.5),
            exchange=exchange(reaction=1.1, v3=0.4),
            cell_porosity=0.9,
            source_plus=f_p,
            source_minus=f_m,
            bc_plus=u_p,
            bc_minus=u_m,
        )
        sol = solve_limit_transport(cfg, surface_source=s_p,
                                    surface_source_minus=s_m)
        x1, x2, zp = cfg.vertex_axes("plus")
        zm = cfg.vertex_axes("minus")[2]
        Xp = np.meshgrid(x1, x2, zp, indexing="ij")
        Xm = np.meshgrid(x1, x2, zm, indexing="ij")
        err = max(float(np.max(np.abs(sol.u_plus - u_p(*Xp)))),
                  float(np.max(np.abs(sol.u_minus - u_m(*Xm)))))
        errs.append(err)
        assert mass_balance_gap(sol, surface_source=s_p,
                                surface_source_minus=s_m) < 1e-10
    hs = [1.0 / n for n in sizes]
    assert fit_loglog_slope(hs, errs) >= 1.8


def test_nonnegativity_with_full_physics():
    cfg = base_config(
        shape=(7, 7, 6, 6),
        reaction_plus=0.5,
        reaction_minus=0.3,
        exchange=exchange(reaction=0.8, v3=0.6),
        surface_diffusion=(0.4, 0.4),
        surface_velocity=lambda x1, x2: (0.5 * np.ones_like(x1),
                                         -0.3 * np.ones_like(x1)),
        vel_plus=lambda x1, x2, x3: (0.3 * np.ones_like(x1),
                                     -0.2 * np.ones_like(x1),
                                     0.4 * np.ones_like(x1)),
        vel_minus=lambda x1, x2, x3: (0.1 * np.ones_like(x1),
                                      0.2 * np.ones_like(x1),
                                      -0.3 * np.ones_like(x1)),
        source_plus=lambda x1, x2, x3: 1.0 + np.sin(math.pi * x1) ** 2,
        cell_porosity=0.8,
    )
    sol = solve_limit_transport(cfg)
    lo, hi = sol.extrema()
    assert lo >= -1e-12
    assert hi > 0.0
    assert mass_balance_gap(sol) < 1e-8


def test_max_principle_without_sources():
    cfg = base_config(
        shape=(6, 6, 5, 5),
        exchange=exchange(v3=0.5),
        vel_plus=lambda x1, x2, x3: (0.4 * np.ones_like(x1),
                                     np.zeros_like(x1),
                                     -0.6 * np.ones_like(x1)),
        bc_plus=lambda x1, x2, x3: 0.5 + 0.5 * np.sin(math.pi * x1) ** 2,
        bc_minus=0.25,
    )
    sol = solve_limit_transport(cfg)
    lo, hi = sol.extrema()
    assert lo >= 0.25 - 1e-12
    assert hi <= 1.0 + 1e-12


def test_layer_reaction_continuity_limit():
    kw = dict(shape=(6, 6, 6, 6), bc_plus=1.0, bc_minus=0.0,
              surface_diffusion=(0.2, 0.2))
    sol0 = solve_limit_transport(base_config(exchange=exchange(0.0), **kw))
    solr = solve_limit_transport(base_config(exchange=exchange(1e-10), **kw))
    gap = max(float(np.max(np.abs(sol0.u_plus - solr.u_plus))),
              float(np.max(np.abs(sol0.u_minus - solr.u_minus))))
    assert gap < 1e-6
    top, bottom = sol0.exchange_fluxes()
    assert np.max(np.abs(top - bottom)) < 1e-12


def test_exchange_moves_mass_downward():
    cfg = base_config(shape=(6, 6, 6, 6), bc_plus=1.0, bc_minus=0.0)
    sol = solve_limit_transport(cfg)
    top, _ = sol.exchange_fluxes()
    assert np.min(top) > 0.0
    assert float(sol.u_minus[3, 3, 2]) > 0.0
    assert float(sol.u_minus.max()) < 1.0


def test_surface_diffusion_flattens_trace():
    src = lambda x1, x2, x3: np.exp(-40.0 * ((x1 - 0.5) ** 2
                                             + (x2 - 0.5) ** 2))
    kw = dict(shape=(10, 10, 5, 5), source_plus=src)
    plain = solve_limit_transport(base_config(**kw))
    smoothed = solve_limit_transport(
        base_config(surface_diffusion=(50.0, 50.0), **kw))
    spread_plain = float(np.max(plain.trace_plus) - np.min(plain.trace_plus))
    spread_smooth = float(np.max(smoothed.trace_plus)
                          - np.min(smoothed.trace_plus))
    assert spread_smooth < 0.2 * spread_plain
