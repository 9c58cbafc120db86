import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stealshare import phasetype as pt
from stealshare import qbd
from stealshare.errors import ConvergenceError, InvalidParameterError, StabilityError

EXP = pt.exponential(1.0)
E5 = pt.erlang(5)
H5 = pt.fit_hyperexp(5, 0.5)
H25 = pt.fit_hyperexp(25, 0.5)


# model --------------------------------------------------------------------------


@pytest.mark.parametrize("d", [EXP, E5, H25, pt.hypoexp([1.5, 3.0])])
@pytest.mark.parametrize("r", [0.0, 1.0, 7.0])
def test_blocks_form_a_generator(d, r):
    m = qbd.QbdModel(d, 0.6, r)
    np.testing.assert_allclose((m.A1 + m.A0 + m.Am1).sum(axis=1), 0.0, atol=1e-14)
    off = m.A0 - np.diag(np.diag(m.A0))
    assert np.all(off >= 0) and np.all(m.A1 >= 0) and np.all(m.Am1 >= 0)


@pytest.mark.parametrize("lam", [1.0, 1.3])
def test_unstable_lambda(lam):
    with pytest.raises(StabilityError):
        qbd.solve(EXP, lam, 1.0)


@pytest.mark.parametrize("lam, r", [(0.0, 1.0), (-0.1, 1.0), (0.5, -1.0), (0.5, 2e9), (0.5, float("nan"))])
def test_invalid_model(lam, r):
    with pytest.raises(InvalidParameterError):
        qbd.QbdModel(EXP, lam, r)


def test_requires_unit_mean():
    with pytest.raises(InvalidParameterError):
        qbd.solve(pt.exponential(2.0), 0.5, 1.0)


# exponential closed forms -------------------------------------------------------


def test_exponential_example():
    sol = qbd.solve(EXP, 0.5, 1.0)
    assert sol.G[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert sol.R[0, 0] == pytest.approx(1 / 3, abs=1e-12)
    assert sol.lambda0 == pytest.approx(2 / 3, abs=1e-12)
    assert qbd.tail_prob(sol, 2) == pytest.approx(1 / 6, abs=1e-12)
    assert qbd.mean_response(sol) == pytest.approx(1.5, abs=1e-12)
    assert qbd.tail_prob(qbd.solve(EXP, 0.5, 0.0), 3) == pytest.approx(1 / 8, abs=1e-12)


@pytest.mark.parametrize("lam", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("r", [0.2, 1.0, 5.0])
def test_exponential_tail_oracle(lam, r):
    sol = qbd.solve(EXP, lam, r)
    for i in range(1, 7):
        assert qbd.tail_prob(sol, i) == pytest.approx(oracles.exp_tail(lam, r, i), abs=1e-10)
    assert qbd.mean_response(sol) == pytest.approx(oracles.exp_mean_response(lam, r), rel=1e-10)


# brute-force truncated chain ------------------------------------------------------


@pytest.mark.parametrize(
    "d, lam, r",
    [(E5, 0.5, 0.2), (E5, 0.875, 1.0), (H5, 0.75, 1.0), (pt.hypoexp([1.5, 3.0]), 0.6, 2.0), (H25, 0.5, 5.0)],
)
def test_against_truncated_chain(d, lam, r):
    sol = qbd.solve(d, lam, r)
    probs, lambda0 = oracles.truncated_chain(d.alpha, d.S, lam, r, 1500)
    assert sol.lambda0 == pytest.approx(lambda0, rel=1e-8)
    np.testing.assert_allclose(sol.levels(30), probs[:31], atol=1e-10)
    assert qbd.mean_response(sol) == pytest.approx(float(np.arange(probs.size) @ probs) / lam, rel=1e-8)


# frozen values from the truncated-chain oracle (1500 levels)
FROZEN = [
    (E5, 0.5, 0.2, 1.5275945086619),
    (H5, 0.75, 1.0, 4.6246355674296),
    (EXP, 0.9, 3.0, 3.25),
]


@pytest.mark.parametrize("d, lam, r, expected", FROZEN)
def test_frozen_mean_response(d, lam, r, expected):
    assert qbd.mean_response(qbd.solve(d, lam, r)) == pytest.approx(expected, abs=1e-9)


# reference values ----------------------------------------------------------------

ERLANG_ROWS = [
    (0.5, 0.2, 1.5276), (0.5, 1.0, 1.3644), (0.5, 5.0, 1.1514),
    (0.75, 0.2, 2.5451), (0.75, 1.0, 2.0148), (0.75, 5.0, 1.4142),
    (0.875, 0.2, 4.5552), (0.875, 1.0, 3.2503), (0.875, 5.0, 1.8774),
]


@pytest.mark.parametrize("lam, r, reference", ERLANG_ROWS)
def test_erlang_rows(lam, r, reference):
    assert qbd.mean_response(qbd.solve(E5, lam, r)) == pytest.approx(reference, abs=5e-5 + 1e-9)


def test_hyperexp_example():
    assert qbd.mean_response(qbd.solve(H25, 0.75, 1.0)) == pytest.approx(14.7129, abs=1e-4)


# hyperexponential cubic -------------------------------------------------------------


@st.composite
def hyper_instances(draw):
    p = draw(st.floats(0.05, 0.95))
    mu1 = draw(st.floats(1.05, 8.0))
    mu2 = (1 - p) / (1 - p / mu1)
    lam = draw(st.floats(0.05, 0.95))
    r = draw(st.floats(0.0, 20.0))
    return p, mu1, mu2, lam, r


@settings(max_examples=60, deadline=None)
@given(hyper_instances())
def test_property_cubic_roots(inst):
    p, mu1, mu2, lam, r = inst
    sol = qbd.solve(pt.hyperexp([p, 1 - p], [mu1, mu2]), lam, r)
    g21, g12 = oracles.hyperexp_g_roots(p, mu1, mu2, lam, r)
    assert sol.G[1, 0] == pytest.approx(g21, abs=1e-8)
    assert sol.G[0, 1] == pytest.approx(g12, abs=1e-8)


# lambda0 and invariants ---------------------------------------------------------------


@pytest.mark.parametrize(
    "d, lam, r",
    [(EXP, 0.5, 1.0), (pt.erlang(2), 0.75, 5.0), (E5, 0.3, 0.0), (H25, 0.875, 0.5), (H5, 0.6, 0.0)],
)
def test_lambda0_forms_agree(d, lam, r):
    sol = qbd.solve(d, lam, r)
    forms = qbd.lambda0_forms(sol)
    assert set(forms) == {"normalization", "closed", "level_crossing"}
    assert qbd.lambda0_consistency(sol) < 1e-10
    if r == 0:
        assert forms["normalization"] == pytest.approx(sol.lambda0, abs=1e-12)


def test_balance_residual_examples():
    assert qbd.balance_residual(qbd.solve(EXP, 0.5, 1.0), 20) < 1e-9
    assert qbd.balance_residual(qbd.solve(E5, 0.875, 5.0), 50) < 1e-8


@pytest.mark.parametrize("tol", [1e-6, 1e-9, 1e-13])
def test_balance_residual_tracks_tolerance(tol):
    # the G residual gate still applies, so every accepted solve is tight
    assert qbd.balance_residual(qbd.solve(H5, 0.8, 0.5, tol=tol), 30) < 1e-10


dists = st.sampled_from([EXP, pt.erlang(2), E5, H5, H25, pt.hypoexp([1.2, 6.0]), pt.fit_hyperexp(10, 0.1)])


@settings(max_examples=80, deadline=None)
@given(dists, st.floats(0.01, 0.98), st.floats(0.0, 50.0))
def test_property_solution_invariants(d, lam, r):
    sol = qbd.solve(d, lam, r)
    inv = qbd.invariants(sol)
    for name, value in inv.items():
        assert value < 1e-9, name
    assert sol.pi0 == pytest.approx(1 - lam, abs=1e-14)
    assert qbd.tail_prob(sol, 1) == pytest.approx(lam, abs=1e-10)
    assert qbd.mean_queue_length(sol) == pytest.approx(lam * qbd.mean_response(sol), rel=1e-12)
    assert np.all(sol.G >= -1e-14) and np.all(sol.R >= -1e-14)
    assert max(abs(np.linalg.eigvals(sol.R))) < 1


R_GRID = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0]


@pytest.mark.parametrize("d", [EXP, E5, H5, H25])
@pytest.mark.parametrize("lam", [0.3, 0.75, 0.95])
def test_monotone_in_r(d, lam):
    sols = [qbd.solve(d, lam, r) for r in R_GRID]
    for k in (2, 3, 4):
        tails = [qbd.tail_prob(s, k) for s in sols]
        assert all(b <= a + 1e-9 for a, b in zip(tails, tails[1:]))
    means = [qbd.mean_response(s) for s in sols]
    assert all(b < a for a, b in zip(means, means[1:]))


@pytest.mark.parametrize("d", [EXP, E5, H25])
@pytest.mark.parametrize("lam", [0.4, 0.8])
def test_overall_share_rate_limit(d, lam):
    rates = [r * qbd.tail_prob(qbd.solve(d, lam, r), 2) for r in np.geomspace(0.01, 1e3, 25)]
    assert all(b >= a - 1e-9 for a, b in zip(rates, rates[1:]))
    limit = lam**2 / (1 - lam)
    assert abs(rates[-1] - limit) < 0.01 * limit


def test_near_null_recurrence_falls_back():
    # logarithmic reduction overflows here; shifted cyclic reduction takes over
    sol = qbd.solve(H25, qbd.LAMBDA_MAX, 0.0)
    assert sol.diagnostics["G_residual"] < qbd.RESIDUAL_TOL
    assert qbd.invariants(sol)["G_stochastic"] < 1e-9


@pytest.mark.parametrize("solver", [qbd.log_reduction, qbd.shifted_cyclic_reduction, qbd.functional_iteration])
def test_each_solver_alone(solver):
    m = qbd.QbdModel(H5, 0.7, 1.5)
    G, _ = solver(m.Am1, m.A0, m.A1)
    ref = qbd.solve(m).G
    np.testing.assert_allclose(G, ref, atol=1e-10)


def test_functional_iteration_cap():
    m = qbd.QbdModel(H25, 0.99, 0.0)
    with pytest.raises(ConvergenceError) as exc:
        qbd.functional_iteration(m.Am1, m.A0, m.A1, max_iter=5)
    assert exc.value.residual > 0
    assert exc.value.iterations == 5


def test_solution_is_immutable():
    sol = qbd.solve(E5, 0.5, 1.0)
    with pytest.raises(ValueError):
        sol.G[0, 0] = 0.0
    with pytest.raises(AttributeError):
        sol.lambda0 = 1.0


def test_json_export():
    sol = qbd.solve(E5, 0.5, 0.2)
    doc = json.loads(sol.to_json())
    for key in ("lambda", "r", "lambda0", "pi0", "G", "R", "pi1", "diagnostics"):
        assert key in doc
    assert doc["lambda0"] == sol.lambda0
    assert np.array(doc["G"]).shape == (5, 5)
    assert doc["diagnostics"]["iterations"] >= 1


def test_levels_csv():
    sol = qbd.solve(EXP, 0.5, 1.0)
    lines = sol.levels_csv(6).strip().splitlines()
    assert lines[0] == "level,prob"
    assert len(lines) == 8
    for row in lines[1:]:
        ell, prob = row.split(",")
        ell = int(ell)
        expected = 0.5 if ell == 0 else oracles.exp_tail(0.5, 1.0, ell) - oracles.exp_tail(0.5, 1.0, ell + 1)
        assert float(prob) == pytest.approx(expected, abs=1e-12)
