import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from verisynth.optim import (LinearProgram, ScpConfig, linearize_bilinear, scp_step, solve_lp,
                             trust_bounds, trust_region_constraints, write_mps)


# -- exact reference LP ---------------------------------------------------------------

def exact_lp(c, A, rel, b, hi, sense):
    """Two-phase tableau simplex over the rationals with Bland's rule.

    Variables are x >= 0 with optional finite upper bounds ``hi``.
    Returns (status, objective)."""
    n = len(c)
    rows = [([Fraction(v) for v in a], r, Fraction(bb)) for a, r, bb in zip(A, rel, b)]
    for j, h in enumerate(hi):
        if math.isfinite(h):
            e = [Fraction(0)] * n
            e[j] = Fraction(1)
            rows.append((e, "<=", Fraction(h)))
    # slack/surplus/artificial columns
    m = len(rows)
    cols = n
    T = []
    basis = []
    slack_of, art = {}, []
    layout = []
    for i, (a, r, bb) in enumerate(rows):
        if bb < 0:
            a, bb = [-v for v in a], -bb
            r = {"<=": ">=", ">=": "<=", "=": "="}[r]
        layout.append((a, r, bb))
    n_slack = sum(r != "=" for _, r, _ in layout)
    n_art = sum(r != "<=" for _, r, _ in layout)
    width = n + n_slack + n_art
    si, ai = n, n + n_slack
    for a, r, bb in layout:
        row = a + [Fraction(0)] * (n_slack + n_art) + [bb]
        if r == "<=":
            row[si] = Fraction(1)
            basis.append(si)
            si += 1
        elif r == ">=":
            row[si] = Fraction(-1)
            si += 1
            row[ai] = Fraction(1)
            basis.append(ai)
            art.append(ai)
            ai += 1
        else:
            row[ai] = Fraction(1)
            basis.append(ai)
            art.append(ai)
            ai += 1
        T.append(row)

    def run(cost, allowed):
        while True:
            # reduced costs for a minimization
            red = []
            for j in range(width):
                if j not in allowed:
                    red.append(Fraction(0))
                    continue
                z = sum(cost[basis[i]] * T[i][j] for i in range(m))
                red.append(cost[j] - z)
            q = next((j for j in range(width) if j in allowed and red[j] < 0), None)
            if q is None:
                return "optimal"
            ratios = [(T[i][-1] / T[i][q], basis[i], i) for i in range(m) if T[i][q] > 0]
            if not ratios:
                return "unbounded"
            _, _, r = min(ratios)
            piv = T[r][q]
            T[r] = [v / piv for v in T[r]]
            for i in range(m):
                if i != r and T[i][q] != 0:
                    f = T[i][q]
                    T[i] = [vi - f * vr for vi, vr in zip(T[i], T[r])]
            basis[r] = q

    cost1 = [Fraction(1) if j in art else Fraction(0) for j in range(width)]
    run(cost1, set(range(width)))
    if sum(T[i][-1] for i in range(m) if basis[i] in art) > 0:
        return "infeasible", None
    # drive remaining zero-level artificials out of the basis where possible
    for i in range(m):
        if basis[i] in art:
            q = next((j for j in range(n + n_slack) if T[i][j] != 0), None)
            if q is not None:
                piv = T[i][q]
                T[i] = [v / piv for v in T[i]]
                for k in range(m):
                    if k != i and T[k][q] != 0:
                        f = T[k][q]
                        T[k] = [vk - f * vi for vk, vi in zip(T[k], T[i])]
                basis[i] = q
    sgn = 1 if sense == "min" else -1
    cost2 = [Fraction(sgn) * Fraction(c[j]) if j < n else Fraction(0) for j in range(width)]
    st_ = run(cost2, set(range(n + n_slack)))
    if st_ == "unbounded":
        return "unbounded", None
    x = [Fraction(0)] * width
    for i in range(m):
        x[basis[i]] = T[i][-1]
    return "optimal", sum(Fraction(c[j]) * x[j] for j in range(n))


def build(c, A, rel, b, hi, sense):
    lp = LinearProgram(sense=sense)
    for j in range(len(c)):
        lp.add_var(lo=0.0, hi=hi[j], obj=c[j])
    for a, r, bb in zip(A, rel, b):
        lp.add_constraint({j: v for j, v in enumerate(a)}, r, bb)
    return lp


@st.composite
def small_lps(draw):
    n = draw(st.integers(1, 6))
    m = draw(st.integers(1, 8))
    coef = st.integers(-5, 5)
    c = [draw(coef) for _ in range(n)]
    A = [[draw(coef) for _ in range(n)] for _ in range(m)]
    rel = [draw(st.sampled_from(["<=", ">=", "="])) for _ in range(m)]
    b = [draw(st.integers(-6, 10)) for _ in range(m)]
    hi = [draw(st.sampled_from([math.inf, 3.0, 8.0])) for _ in range(n)]
    sense = draw(st.sampled_from(["min", "max"]))
    return c, A, rel, b, hi, sense


@settings(max_examples=300, deadline=None)
@given(small_lps())
def test_simplex_matches_exact_reference(lp_data):
    status, obj = exact_lp(*lp_data)
    lp = build(*lp_data)
    for backend in ("simplex", "auto"):
        res = solve_lp(lp, backend=backend)
        assert res.status == status
        if status == "optimal":
            assert res.objective == pytest.approx(float(obj), abs=1e-8)
            assert lp.violation(res.x) < 1e-7
            assert lp.value(res.x) == pytest.approx(res.objective, abs=1e-8)


def test_trivial_max():
    lp = LinearProgram(sense="max")
    x = lp.add_var("x", obj=1.0)
    lp.add_constraint({x: 1.0}, "<=", 3.0)
    res = solve_lp(lp)
    assert res.status == "optimal" and res.objective == 3.0 and res.assignment == {"x": 3.0}


def test_infeasible_pair():
    lp = LinearProgram()
    x = lp.add_var("x", lo=-math.inf)
    lp.add_constraint({x: 1.0}, "<=", 0.0)
    lp.add_constraint({x: 1.0}, ">=", 1.0)
    assert solve_lp(lp).status == "infeasible"
    assert solve_lp(lp, backend="simplex").status == "infeasible"


def test_unbounded():
    lp = LinearProgram(sense="max")
    x = lp.add_var("x", obj=1.0)
    lp.add_constraint({x: 1.0}, ">=", 1.0)
    assert solve_lp(lp).status == "unbounded"


def test_pmc_lp_at_fixed_parameter():
    # min p0 s.t. p0 >= v p1, p1 >= (1-v) p2, p2 >= v p3, p3 = 1 at v = 0.5
    v = 0.5
    lp = LinearProgram(sense="min")
    p = [lp.add_var(f"p{i}", 0.0, 1.0) for i in range(4)]
    lp.set_obj(p[0], 1.0)
    lp.add_constraint({p[0]: 1.0, p[1]: -v}, ">=", 0.0)
    lp.add_constraint({p[1]: 1.0, p[2]: -(1 - v)}, ">=", 0.0)
    lp.add_constraint({p[2]: 1.0, p[3]: -v}, ">=", 0.0)
    lp.add_constraint({p[3]: 1.0}, "=", 1.0)
    res = solve_lp(lp)
    assert res.objective == pytest.approx(0.125, abs=1e-12)


def test_free_and_negative_bounds():
    lp = LinearProgram(sense="min")
    x = lp.add_var("x", lo=-math.inf, obj=1.0)
    y = lp.add_var("y", lo=-4.0, hi=-1.0, obj=-1.0)
    lp.add_constraint({x: 1.0, y: -1.0}, ">=", -2.0)
    res = solve_lp(lp, backend="simplex")
    # x >= y - 2, minimize x - y -> -2
    assert res.objective == pytest.approx(-2.0)


def test_deterministic():
    rng = np.random.default_rng(0)
    lp = LinearProgram(sense="max")
    for j in range(20):
        lp.add_var(obj=float(rng.random()), hi=1.0)
    for i in range(15):
        lp.add_constraint({j: float(rng.random()) for j in range(20)}, "<=", 3.0)
    a, b = solve_lp(lp), solve_lp(lp)
    assert np.array_equal(a.x, b.x) and a.objective == b.objective


def test_lp_input_validation():
    lp = LinearProgram()
    with pytest.raises(ValueError):
        lp.add_var(lo=2.0, hi=1.0)
    x = lp.add_var()
    with pytest.raises(ValueError):
        lp.add_constraint({5: 1.0}, "<=", 1.0)
    with pytest.raises(ValueError):
        lp.add_constraint({x: math.nan}, "<=", 1.0)
    with pytest.raises(ValueError):
        lp.add_constraint({x: 1.0}, "<", 1.0)


def test_mps_dump():
    lp = LinearProgram(sense="max")
    x = lp.add_var("x", hi=4.0, obj=2.0)
    lp.add_constraint({x: 1.0}, "<=", 3.0, "cap")
    text = write_mps(lp)
    for section in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
        assert section in text
    assert "cap" in text


# -- bilinear linearization ------------------------------------------------------------

def h(d, c, y, z):
    return (2 * d * y + c) * z


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 1), st.floats(0, 1),
       st.floats(0, 1), st.floats(0, 1))
def test_linearization_properties(d, c, yh, zh, y, z):
    ha = linearize_bilinear(d, c, yh, zh)
    assert ha(yh, zh) == pytest.approx(h(d, c, yh, zh), abs=1e-12)
    # the error is exactly the bilinear remainder
    assert h(d, c, y, z) - ha(y, z) == pytest.approx(2 * d * (y - yh) * (z - zh), abs=1e-12)
    if d == 0:
        assert ha(y, z) == pytest.approx(c * z, abs=1e-12)


def test_linearization_examples():
    assert linearize_bilinear(1, 0, 0.4, 0.7)(0.4, 0.7) == pytest.approx(0.56)
    ha = linearize_bilinear(1, 0, 0.5, 0.5)
    assert ha(0.6, 0.6) == pytest.approx(0.70)
    assert h(1, 0, 0.6, 0.6) == pytest.approx(0.72)
    assert linearize_bilinear(0, 2.0, 0.3, 0.1)(0.9, 0.4) == pytest.approx(0.8)


# -- trust regions and steps ----------------------------------------------------------

def test_trust_region_examples():
    lo, hi = trust_bounds(0.5, 1.0, 1e-6, 1 - 1e-6)
    assert lo == 0.25 and hi == 1 - 1e-6
    lo, hi = trust_bounds(0.5, 1e-12)
    assert lo == pytest.approx(0.5) and hi == pytest.approx(0.5)
    lo, _ = trust_bounds(1e-6, 9.0, 1e-6, 1 - 1e-6)
    assert lo == 1e-6
    box = trust_region_constraints({"v": 0.5, "w": 0.2}, 1.0, eps=1e-6)
    assert box["w"] == (pytest.approx(0.1), pytest.approx(0.4))
    with pytest.raises(ValueError):
        trust_bounds(0.0, 1.0)


def test_scp_step_examples():
    r = scp_step(0.6, 0.5, 1.0, 2.0)
    assert r.accept and r.delta == 2.0
    r = scp_step(0.5, 0.5, 1.0, 2.0)
    assert not r.accept and r.delta == 0.5
    assert scp_step(0.4, 0.5, 1.0, 2.0, maximize=False).accept
    with pytest.raises(ValueError):
        scp_step(0.6, 0.5, 1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), max_size=30), st.floats(1.01, 4.0), st.floats(0.01, 10.0))
def test_delta_bookkeeping(pattern, gamma, delta0):
    delta, best = delta0, 0.0
    for acc in pattern:
        r = scp_step(best + (1.0 if acc else 0.0), best, delta, gamma)
        assert r.accept == acc
        delta = r.delta
        if acc:
            best += 1.0
    m = sum(pattern)
    assert delta == pytest.approx(delta0 * gamma ** (m - (len(pattern) - m)), rel=1e-9)


def test_scp_config_validation():
    ScpConfig()
    for bad in (dict(delta0=0), dict(gamma=1.0), dict(omega=-1), dict(tau=0),
                dict(eps_graph=0.2), dict(eps_pol=0), dict(max_iters=0)):
        with pytest.raises(ValueError):
            ScpConfig(**bad)
    cfg = ScpConfig()
    assert (cfg.delta0, cfg.gamma, cfg.omega, cfg.tau, cfg.eps_graph, cfg.eps_pol,
            cfg.max_iters) == (1.0, 1.5, 1e-4, 1e4, 1e-6, 1e-6, 200)
