from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from kslab.errors import DomainError, PreconditionError
from kslab.motility import (
    Regime,
    Verdict,
    check_assumptions,
    classify_regime,
    eval_gamma,
    exponential,
    implied_k,
    load_tabulated_csv,
    motility_from_dict,
    parse_motility,
    power,
    power_log,
    ratio_infimum,
    stretched_exponential,
    supremal_l,
    tabulated,
)

S = sp.symbols("s", positive=True)


def _symbolic(m):
    if m.family == "power":
        return S ** (-sp.Float(m.k))
    if m.family == "exponential":
        return sp.exp(-sp.Float(m.chi) * S)
    if m.family == "stretched":
        return sp.exp(-sp.Float(m.chi) * S ** sp.Float(m.beta))
    return 1 / (S ** sp.Float(m.k) * sp.log(1 + S))


FAMILIES = [power(0.5), power(2.0), exponential(1.5), stretched_exponential(1.0, 0.5), stretched_exponential(0.7, 2.0), power_log(1.0), power_log(0.3)]


def test_eval_gamma_examples():
    assert eval_gamma(power(1), 2) == pytest.approx((0.5, -0.25, 0.25), rel=1e-15)
    assert eval_gamma(exponential(1), 0) == pytest.approx((1.0, -1.0, 1.0), rel=1e-15)
    assert eval_gamma(power(2), 1) == pytest.approx((1.0, -2.0, 6.0), rel=1e-15)


def test_power_domain_error():
    with pytest.raises(DomainError):
        eval_gamma(power(1), 0.0)
    with pytest.raises(DomainError):
        power_log(1).gamma(np.array([1.0, -1.0]))


@pytest.mark.parametrize("m", FAMILIES, ids=lambda m: m.label)
def test_derivatives_match_symbolic_oracle(m):
    expr = _symbolic(m)
    d1, d2 = sp.diff(expr, S), sp.diff(expr, S, 2)
    for s in (0.05, 0.3, 1.0, 2.7, 11.0):
        want = [float(e.subs(S, s)) for e in (expr, d1, d2)]
        got = eval_gamma(m, s)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("m", FAMILIES, ids=lambda m: m.label)
def test_derivatives_finite_difference_crosscheck(m):
    for s in (0.2, 1.0, 3.0):
        h = 1e-5 * s
        gp, g0, gm = (float(m.gamma(x)) for x in (s + h, s, s - h))
        _, g1, g2 = eval_gamma(m, s)
        assert (gp - gm) / (2 * h) == pytest.approx(g1, rel=1e-6)
        assert (gp - 2 * g0 + gm) / h**2 == pytest.approx(g2, rel=1e-4)


@pytest.mark.parametrize("m", FAMILIES, ids=lambda m: m.label)
def test_motility_sign_invariants(m):
    g, g1, _ = m.derivatives(np.geomspace(1e-2, 10, 200))
    assert np.all(g > 0) and np.all(g1 <= 0)


def test_supremal_l_closed_forms():
    for k in (0.1, 0.5, 1.0, 3.0):
        assert supremal_l(power(k)) == 1 + 1 / k
        assert implied_k(supremal_l(power(k))) == pytest.approx(k, rel=1e-12)
    assert supremal_l(exponential(3.0)) == 1.0
    assert supremal_l(power(1)) == 2.0


@pytest.mark.parametrize("k", [0.3, 1.0, 2.5])
def test_power_log_infimum_against_sampled_symbolic_ratio(k):
    expr = _symbolic(power_log(k))
    ratio = sp.lambdify(S, sp.simplify(expr * sp.diff(expr, S, 2) / sp.diff(expr, S) ** 2), "mpmath")
    vals = [float(ratio(sp.Float(s))) for s in np.geomspace(1e-8, 1e8, 200)]
    inf = ratio_infimum(power_log(k))
    assert inf.value == pytest.approx(1 + 1 / (k + 1), rel=1e-12)
    assert not inf.attained
    assert min(vals) >= inf.value - 1e-6
    assert min(vals) == pytest.approx(inf.value, rel=1e-5)
    assert np.all(np.diff(vals) >= -1e-9)


def test_stretched_infimum():
    m = stretched_exponential(1.0, 0.5)
    assert ratio_infimum(m).value == 1.0 and not ratio_infimum(m).attained
    r = ratio_infimum(m, (0.1, 10.0))
    assert r.value == pytest.approx(1 + 0.5 / (0.5 * 10**0.5), rel=1e-12)


def test_implied_k():
    assert implied_k(2) == 1
    assert implied_k(3) == 0.5
    with pytest.raises(PreconditionError):
        implied_k(1.0)


def test_check_assumptions_examples():
    r = check_assumptions(power(1), 3)
    assert r.A3b.holds and r.A3u.holds and r.A3a.holds
    assert r.A3u.witness["l0_sup"] == 2
    e = check_assumptions(exponential(1), 2)
    assert e.A2p.status is Verdict.FAILS
    assert e.A2pp.holds and e.A2pp.witness["chi_min"] == 1
    assert e.A3u.status is Verdict.FAILS
    st_ = check_assumptions(stretched_exponential(1, 0.5), 2)
    assert st_.A2.status is Verdict.FAILS and st_.A2p.holds
    with pytest.raises(PreconditionError):
        check_assumptions(power(1), 3, samples=10)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_power_thresholds_exact_across_boundary(n):
    k_a = (math.sqrt(2 * n) + 2) / (n - 2)
    k_u = 2 / (n - 2)
    k_b = 1 / (n // 2)
    for d in (-1e-6, 0.0, 1e-6):
        r = check_assumptions(power(k_a + d), n)
        assert r.A3a.holds == (d < 0)
        r = check_assumptions(power(k_u + d), n)
        assert r.A3u.holds == (d < 0)
        r = check_assumptions(power(k_b + d), n)
        assert r.A3b.holds == (d <= 0)


@given(st.sampled_from(["power", "exponential", "stretched", "powerlog"]), st.floats(0.05, 5), st.floats(0.1, 3), st.integers(2, 6))
def test_lattice_implications(fam, a, b, n):
    m = {"power": power(a), "exponential": exponential(a), "stretched": stretched_exponential(a, b), "powerlog": power_log(a)}[fam]
    r = check_assumptions(m, n)
    if r.A2.holds:
        assert r.A2p.holds
    if r.A2p.holds:
        assert r.A2pp.holds
    if r.A3b.holds and n >= 3:
        assert r.A3u.holds
    if r.A3u.holds:
        assert r.A3a.holds


def _table_from(m, s):
    g, g1, g2 = m.derivatives(s)
    return tabulated(s, g, g1, g2)


def test_tabulated_decisions():
    s = np.geomspace(0.1, 200, 400)
    tp = check_assumptions(_table_from(power(1.0), s), 2)
    assert tp.A0.holds and tp.A2.holds and tp.A2p.holds
    te = check_assumptions(_table_from(exponential(0.5), s), 2)
    assert te.A2p.status is Verdict.FAILS and te.A2pp.holds
    assert te.A2pp.witness["chi_min"] == pytest.approx(0.5, rel=0.05)
    ts = check_assumptions(_table_from(stretched_exponential(1.0, 0.5), s), 2)
    assert ts.A2.status is Verdict.FAILS and ts.A2p.holds
    g, g1, g2 = power(1.0).derivatives(s)
    bumpy = g * (1 + 0.2 * np.sin(s))
    tb = check_assumptions(tabulated(s, bumpy, g1, g2), 2)
    assert tb.A1.status is Verdict.UNDECIDABLE and tb.A2.status is Verdict.UNDECIDABLE


def test_tabulated_flat_derivative_gives_infinite_ratio():
    s = np.array([1.0, 2.0, 3.0])
    m = tabulated(s, [1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    assert supremal_l(m) == math.inf


def test_load_tabulated_csv(tmp_path):
    p = tmp_path / "g.csv"
    s = np.linspace(1, 5, 10)
    g, g1, g2 = power(1.0).derivatives(s)
    p.write_text("s,gamma,dgamma,d2gamma\n" + "\n".join(",".join(repr(float(x)) for x in r) for r in zip(s, g, g1, g2)))
    m = load_tabulated_csv(p)
    assert m.gamma(2.0) == pytest.approx(0.5, rel=2e-2)
    assert motility_from_dict({"family": "tabulated", "path": "g.csv"}, tmp_path) == m
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n")
    with pytest.raises(PreconditionError):
        load_tabulated_csv(bad)


def test_parse_motility():
    assert parse_motility("power:k=1") == power(1)
    assert parse_motility("stretched:chi=1,beta=0.5") == stretched_exponential(1, 0.5)
    with pytest.raises(PreconditionError):
        parse_motility("quadratic:a=1")
    with pytest.raises(PreconditionError):
        parse_motility("power")
    with pytest.raises(PreconditionError):
        parse_motility("power:k=-1")


def test_classify_examples():
    assert classify_regime(2, 1, exponential(1), 10).verdict is Regime.BOUNDED
    v = classify_regime(3, 0, power(3), 1.0)
    assert v.verdict is Regime.OPEN and v.rule == "nd-elliptic-exists"
    assert classify_regime(4, 1, power(0.5), 1.0).verdict is Regime.BOUNDED
    assert classify_regime(2, 0, exponential(1), 4 * math.pi).verdict is Regime.OUTSIDE
    assert classify_regime(2, 0, stretched_exponential(1, 2), 1).verdict is Regime.OUTSIDE
    with pytest.raises(PreconditionError):
        classify_regime(2, 0, power(1), 0.0)


@given(st.integers(1, 6), st.sampled_from([0.0, 0.5]), st.floats(0.05, 6), st.floats(0.1, 100))
def test_classify_is_deterministic_and_total(n, eps, k, mass):
    a = classify_regime(n, eps, power(k), mass)
    b = classify_regime(n, eps, power(k), mass)
    assert a == b and a.rule
