import math

import numpy as np
import pytest

from dgcert import (
    Coefficient,
    FeFunction,
    Problem,
    TimePartition,
    dual_norm_oracle,
    lemma_identity_gap,
    make_problem,
    pointwise_form_check,
    solve_all,
    space_from_points,
    true_error,
    uniform_space,
)
from dgcert.spatial import SpatialOperators, gauss01
from dgcert.verify import certify, fitted_rate

from conftest import alternating_run, decay_problem


def test_true_error_of_reproduced_solution(hier):
    # dG reproduces phi(x) q(t) with polynomial q; the true error is a
    # quadrature-floor zero
    from dgcert import WeakSource
    V = uniform_space(hier, 3)
    coeff = Coefficient()
    rng = np.random.default_rng(2)
    phi = FeFunction(V, rng.standard_normal(V.dim))
    q = np.polynomial.Polynomial([1.0, -0.5])
    slopes = phi.slopes()
    verts = V.vertices

    def u_x(x, t):
        idx = np.clip(np.searchsorted(verts, x, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx] * q(t)

    from dgcert import ManufacturedSolution
    ex = ManufacturedSolution(
        u=lambda x, t: phi(x) * q(t), u_t=lambda x, t: phi(x) * q.deriv()(t),
        u_x=u_x, u_xx=lambda x, t: np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape))

    def load(space, t):
        ops = SpatialOperators.get(space, coeff)
        return float(q.deriv()(t)) * ops.load_from_function(phi) \
            + float(q(t)) * ops.energy_pair(phi)

    prob = Problem(coeff=coeff, initial=lambda x: phi(x), final_time=1.0,
                   source=WeakSource(load), manufactured=ex)
    sol = solve_all(prob, TimePartition.uniform(1.0, 2, 1), [V, V])
    assert true_error(sol, prob, "L2X") <= 1e-10
    assert true_error(sol, prob, "LinfH") <= 1e-10


def test_true_error_zero_solution_closed_forms(hier):
    # U == 0 against u = sin(pi x) e^{-t} on (0,1]:
    #   ||u||_{L2(0,1;X)} = pi sqrt(1 - e^{-2}) / 2,  ||u||_{Linf(H)} = 1/sqrt(2)
    prob = decay_problem(1.0, 1.0)
    V = uniform_space(hier, 5)
    zero_prob = Problem(coeff=prob.coeff, initial=lambda x: 0 * x, final_time=1.0,
                        source=lambda x, t: np.zeros_like(x * t),
                        manufactured=prob.manufactured)
    sol = solve_all(zero_prob, TimePartition.uniform(1.0, 2, 1), [V, V])
    closed_l2x = math.pi * math.sqrt(1 - math.exp(-2)) / 2
    # quadrature cross-check of the closed form
    s, w = gauss01(30)
    quad = math.pi**2 / 2 * np.dot(w, np.exp(-2 * s))
    assert closed_l2x == pytest.approx(math.sqrt(quad), rel=1e-12)
    assert true_error(sol, zero_prob, "L2X") == pytest.approx(closed_l2x, rel=1e-8)
    assert true_error(sol, zero_prob, "LinfH") == pytest.approx(1 / math.sqrt(2), rel=1e-10)


def test_true_error_quadrature_converged(hier):
    prob, sol = alternating_run(hier, r=1, n_slabs=4, k_base=4)
    for tag in ("L2X", "LinfH"):
        v1 = true_error(sol, prob, tag)
        v2 = true_error(sol, prob, tag, t_extra=8, x_pts=24, n_linf=60)
        assert v2 == pytest.approx(v1, rel=1e-8)


def test_true_error_requires_manufactured(hier):
    V = uniform_space(hier, 3)
    prob = Problem(coeff=Coefficient(), initial=lambda x: 0 * x, final_time=1.0,
                   source=lambda x, t: np.zeros_like(x * t))
    sol = solve_all(prob, TimePartition.uniform(1.0, 1, 0), [V])
    with pytest.raises(ValueError, match="no exact solution"):
        true_error(sol, prob, "L2X")
    with pytest.raises(ValueError, match="unknown norm"):
        true_error(solve_all(make_problem("zero"), TimePartition.uniform(1.0, 1, 0), [V]),
                   make_problem("zero"), "H1")


def test_dual_norm_oracle_closed_form(hier):
    # v == 1: psi = x(1-x)/2, ||v||_{X'} = ||psi'|| = 1/sqrt(12); quadrature
    # cross-check of the closed form: int (1/2 - x)^2 = 1/12
    s, w = gauss01(6)
    assert np.dot(w, (0.5 - s) ** 2) == pytest.approx(1 / 12, rel=1e-14)
    V = uniform_space(hier, 7)
    v = FeFunction(V, np.ones(V.dim))  # interpolant of 1 (0 at the boundary)
    got = dual_norm_oracle(v, depth=4)
    assert got == pytest.approx(1 / math.sqrt(12), rel=2e-4)
    assert got <= 1 / math.sqrt(12)  # from below
    zero = FeFunction(V, np.zeros(V.dim))
    assert dual_norm_oracle(zero) == 0.0


def test_dual_norm_oracle_monotone_in_depth(hier):
    V = uniform_space(hier, 4)
    rng = np.random.default_rng(3)
    v = FeFunction(V, rng.standard_normal(V.dim))
    vals = [dual_norm_oracle(v, depth=d) for d in (1, 2, 3, 4)]
    assert all(a <= b + 1e-14 for a, b in zip(vals[:-1], vals[1:]))


def test_pointwise_form_zero_data(hier):
    prob = make_problem("zero", final_time=0.5)
    V = uniform_space(hier, 3)
    sol = solve_all(prob, TimePartition.uniform(0.5, 1, 1), [V])
    assert pointwise_form_check(sol, prob, 1) <= 1e-14


def test_pointwise_form_one_dof_miniature(hier):
    # single slab, r = 0, one spatial dof: everything dense and tiny
    V = space_from_points(hier, [0.5])
    prob = decay_problem(1.0, 0.25)
    sol = solve_all(prob, TimePartition.uniform(0.25, 1, 0), [V])
    assert pointwise_form_check(sol, prob, 1) <= 1e-12


def test_pointwise_form_manufactured_run(hier):
    prob, sol = alternating_run(hier, r=1, n_slabs=4, k_base=3)
    for n in range(1, 5):
        assert pointwise_form_check(sol, prob, n) <= 1e-6


def test_lemma_identity_gap_small(hier):
    prob, sol = alternating_run(hier, r=2, n_slabs=3, k_base=3)
    for n in (1, 2, 3):
        assert lemma_identity_gap(sol, n) <= 1e-10


def test_effectivity_guardrails(hier):
    for name, r, n, k in [("sinpi_expdecay", 0, 4, 4), ("sinpi_expdecay", 2, 8, 5)]:
        prob = make_problem(name, final_time=1.0)
        V = uniform_space(hier, k)
        sol = solve_all(prob, TimePartition.uniform(1.0, n, r), [V] * n)
        rep = certify(prob, sol)
        assert rep.final.eff_l2x >= 1.0 - 1e-6
        assert rep.final.eff_linfh >= 1.0 - 1e-6
        assert rep.final.eff_l2x <= 200.0
        assert rep.final.eff_linfh <= 200.0


def test_fitted_rate_on_synthetic_data():
    hs = [0.1, 0.05, 0.025]
    errs = [3 * h**1.7 for h in hs]
    assert fitted_rate(hs, errs) == pytest.approx(1.7, rel=1e-12)
