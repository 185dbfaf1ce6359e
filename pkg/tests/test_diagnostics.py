from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kslab.diagnostics import (
    ComparisonFit,
    a3b_condition_margin,
    comparison_check,
    default_energy_set,
    envelope_check,
    gronwall_envelope_audit,
    key_identity_residual,
    kid0_residual,
    l1_dt_lp_monitor,
    lambda_weights,
    moser_alpha,
    moser_ladder,
    sliding_window_integrals,
    weighted_energy,
    within_running_median,
)
from kslab.elliptic import HelmholtzSolver
from kslab.errors import PreconditionError
from kslab.grid import build_grid
from kslab.motility import exponential, power
from kslab.stepper import SimConfig, SimState, run

G = build_grid(2, 16, 1.0)


def _const(c, t=0.0):
    f = G.full(c)
    return SimState(t, 0.1, f, f.copy(), f.copy())


def test_residuals_vanish_on_constant_state():
    solver = HelmholtzSolver(G)
    a, b = _const(1.5), _const(1.5, 0.1)
    assert key_identity_residual(a, b, 0.1, exponential(1), solver) <= 1e-10
    assert kid0_residual(a, b, 0.1, exponential(1), solver) <= 1e-10
    with pytest.raises(PreconditionError):
        kid0_residual(a, b, 0.1, exponential(1), solver, eps=1.0)


def test_key_identity_matches_kid0_on_elliptic_run():
    cfg = SimConfig(G, exponential(1.0), 0.0, u0={"kind": "gaussian", "mass": 2.0, "bumps": [{"width": 0.1}], "background": 0.3}, T=0.05, dt0=1e-3, dt_max=1e-3)
    _, rep, _ = run(cfg)
    k, k0 = rep.column("key_id_res")[1:], rep.column("kid0_res")[1:]
    assert np.max(np.abs(k - k0)) <= 1e-12


def test_envelope_examples():
    w0 = np.random.default_rng(0).random(G.shape) + 0.5
    assert envelope_check(w0, w0, 0.0, 0.7) == 0.0
    c = 2.0
    m = exponential(1.0)
    t = 3.0
    margin = envelope_check(G.full(c), G.full(c), t, float(m.gamma(c)))
    assert margin == pytest.approx(c * (math.exp(math.exp(-c) * t) - 1), rel=1e-12)
    with pytest.raises(PreconditionError):
        envelope_check(w0, w0, -1.0, 1.0)


def test_comparison_examples():
    rng = np.random.default_rng(1)
    w = rng.random(G.shape) + 0.2
    assert comparison_check(w, w, 1.01, 1.0) > 0
    v0 = w - 0.1 * rng.random(G.shape)
    C, K = 1.5, 0.3
    direct = np.min(C * (w + K) - v0)
    assert comparison_check(v0, w, C, K) == pytest.approx(direct, rel=1e-15)
    assert direct >= (C - 1) * w.min() + C * K - np.max(v0 - w) - 1e-12
    with pytest.raises(PreconditionError):
        comparison_check(w, w, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        comparison_check(w, w, 2.0, 0.0)


def test_comparison_fit_lattice():
    fit = ComparisonFit()
    w = G.full(1.0)
    fit.update(2.0 * w, w)
    need = fit.required_K()
    assert need[2.0] == pytest.approx(0.0, abs=1e-15)
    assert need[1.01] == pytest.approx(2 / 1.01 - 1, rel=1e-12)
    assert fit.best() == (1.01, 1.0)


def test_weighted_energy_examples():
    g = build_grid(2, 8, 1.0)
    one = g.full(1.0)
    assert weighted_energy(g, one, one, 1, 1, power(1)) == pytest.approx(1.0, rel=1e-14)
    u = np.random.default_rng(2).random(g.shape)
    assert weighted_energy(g, u, one, 1, 0, power(1)) == pytest.approx(g.lp_norm(u, 2) ** 2, rel=1e-12)
    with pytest.raises(PreconditionError):
        weighted_energy(g, u, one, -1, 0, power(1))


def test_lambda_weights_examples():
    assert lambda_weights(2) == [1, 2, 1]
    assert lambda_weights(3) == [1, 3, 3, 1]
    with pytest.raises(PreconditionError):
        lambda_weights(0)


@pytest.mark.parametrize("p", range(1, 13))
def test_lambda_weights_binomial_rows(p):
    # oracle: Pascal's rule in exact rational arithmetic
    row = [Fraction(1)]
    for _ in range(p):
        row = [Fraction(1)] + [row[i] + row[i + 1] for i in range(len(row) - 1)] + [Fraction(1)]
    lam = lambda_weights(p)
    assert lam == [float(x) for x in row]
    assert lam == lam[::-1] and all(x > 0 for x in lam)


def test_default_energy_set():
    assert default_energy_set(2) == [(1, 0), (1, 1)]
    assert default_energy_set(4) == [(1, 0), (1, 1), (2, 0), (2, 1), (2, 2)]


def test_a3b_margin_examples():
    assert a3b_condition_margin(power(1), 1) == pytest.approx(0.0, abs=1e-12)
    assert a3b_condition_margin(power(0.5), 2) == pytest.approx(0.0, abs=1e-9)
    assert a3b_condition_margin(power(0.5), 1) > 0
    for p in (1, 2, 3):
        assert a3b_condition_margin(exponential(2.0), p) < 0


@pytest.mark.parametrize("k", [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_a3b_margin_sign_matches_symbolic(k, p):
    # γγ'' - (p+1)γ'² = k s^{-2k-2} ((k+1) - (p+1)k), sign of (1 + 1/k) - (p+1)
    expected = (1 + 1 / k) - (p + 1)
    margin = a3b_condition_margin(power(k), p)
    if abs(expected) < 1e-12:
        assert abs(margin) <= 1e-9
    else:
        assert np.sign(margin) == np.sign(expected)


def test_moser_ladder_examples():
    lad = moser_ladder(3, 1.0, 4)
    assert lad.q_star == 6
    assert lad.p == (3, 4.5, 7.5, 13.5, 25.5)
    assert lad.closed_form(2) == 7.5
    assert moser_ladder(4, 0.5, 3).p == (2, 3, 5, 9)
    assert 0 < lad.exponent_normalizer < math.inf
    with pytest.raises(PreconditionError):
        moser_ladder(3, 2.0, 3)
    with pytest.raises(PreconditionError):
        moser_ladder(2, 0.5, 3)


def test_moser_alpha_examples():
    a = moser_alpha(4.5, 3, 1.0, 3)
    assert a.alpha == pytest.approx(7 / 15, rel=1e-14)
    assert a.ratios[0] == pytest.approx(2.0, rel=1e-12)
    assert moser_alpha(3, 2, 0.5, 4).alpha == pytest.approx(5 / 9, rel=1e-14)
    with pytest.raises(PreconditionError):
        moser_alpha(5.0, 3, 1.0, 3)
    with pytest.raises(PreconditionError):
        moser_alpha(1.5, 1.0, 1.0, 3)


@given(st.integers(3, 8), st.floats(0.01, 0.99), st.floats(0.0, 20.0))
def test_moser_alpha_property(n, frac, extra):
    k = frac * 2 / (n - 2)
    q = n / (n - 2) + extra
    p = 2 * q - n * k / 2
    a = moser_alpha(p, q, k, n)
    assert 0 < a.alpha < 1
    for got, want in zip(a.ratios, a.expected):
        assert got == pytest.approx(want, rel=1e-12)
    assert a.gap_ratio == pytest.approx(n / (n + 2), rel=1e-12)


def test_gronwall_examples():
    t = np.arange(0, 5.0001, 0.01)
    c = np.full_like(t, 3.0)
    z = np.zeros_like(t)
    res = gronwall_envelope_audit(c, z, z, 1.0, 0.01)
    assert res and res.worst_margin == pytest.approx(0.0, abs=1e-12)
    res = gronwall_envelope_audit(np.exp(-t), z, z, 1.0, 0.01)
    assert res and res.worst_margin > 0 and res.inequality_violations == 0
    bad = gronwall_envelope_audit(np.exp(t), z, z, 1.0, 0.01)
    assert not bad and bad.inequality_violations > 0
    good = gronwall_envelope_audit(np.exp(t), np.ones_like(t), z, 1.0, 0.01)
    assert good
    with pytest.raises(PreconditionError):
        gronwall_envelope_audit(c, z, z, 0.015, 0.01)


def test_l1_dt_monitor_examples():
    c = 1.7
    g = exponential(1.0)
    t = np.linspace(0, 3, 301)
    y = np.full_like(t, float(g.gamma(c)) * c**2 * G.measure)
    _, windows = sliding_window_integrals(t, y, 1.0)
    assert np.allclose(windows, y[0], rtol=1e-12)
    per = 2 + np.sin(2 * np.pi * t)
    shifted = 2 + np.sin(2 * np.pi * (t + 0.25))
    assert l1_dt_lp_monitor(t, per) == pytest.approx(l1_dt_lp_monitor(t, shifted), rel=1e-3)
    with pytest.raises(PreconditionError):
        l1_dt_lp_monitor(t[:10], y[:10])


def test_within_running_median():
    assert within_running_median([1, 1.2, 0.9, 1.1])
    assert not within_running_median([1, 1, 1, 10])


def test_report_columns_and_summary():
    cfg = SimConfig(G, exponential(1.0), 1.0, u0={"kind": "gaussian", "mass": 2.0, "background": 0.5}, v0={"kind": "constant", "value": 1.0}, T=1.5, dt0=1e-2, dt_max=5e-2)
    _, rep, _ = run(cfg)
    assert rep.columns[:12] == ["t", "dt", "mass", "mass_drift", "sup_u", "min_u", "min_v", "min_w", "key_id_res", "kid0_res", "envelope_margin", "comparison_margin"]
    assert rep.columns[12:15] == ["energy_p1_q0", "energy_p1_q1", "energy_comb_p1"]
    assert rep.columns[15] == "exp_moment"
    assert all(len(r) == len(rep.columns) for r in rep.rows)
    assert np.all(np.isnan(rep.column("kid0_res")))
    assert np.all(rep.column("min_v") > 0) and np.all(rep.column("min_w") > 0)
    assert rep.summary["gronwall"]["passed"]
    assert math.isfinite(rep.summary["l1_dt_sup"])
    assert rep.summary["comparison_best"] is not None
