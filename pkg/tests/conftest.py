import math

import numpy as np
import pytest

from dgcert import (
    Coefficient,
    FeFunction,
    ManufacturedSolution,
    Problem,
    SpaceHierarchy,
    SpatialOperators,
    TimePartition,
    WeakSource,
    make_problem,
    solve_all,
    split_elements,
    uniform_space,
)


@pytest.fixture(scope="session")
def hier():
    return SpaceHierarchy()


@pytest.fixture(scope="session")
def unit_coeff():
    return Coefficient()


def decay_problem(kappa: float = 1.0, T: float = 1.0) -> Problem:
    """u = sin(pi x) exp(-kappa t) with a == 1."""
    pi = math.pi
    ex = ManufacturedSolution(
        u=lambda x, t: np.sin(pi * x) * np.exp(-kappa * t),
        u_t=lambda x, t: -kappa * np.sin(pi * x) * np.exp(-kappa * t),
        u_x=lambda x, t: pi * np.cos(pi * x) * np.exp(-kappa * t),
        u_xx=lambda x, t: -pi**2 * np.sin(pi * x) * np.exp(-kappa * t),
    )
    return Problem(coeff=Coefficient(), initial=lambda x: np.sin(pi * x),
                   final_time=T, manufactured=ex, name=f"decay{kappa}")


def pure_temporal_problem(hier, k_mesh: int = 4, T: float = 1.0):
    """u = phi(x) exp(-t) with phi a fixed P1 interpolant: the spatial
    discretization error vanishes, so runs on phi's mesh isolate the
    temporal order.  The source acts weakly (A phi is distributional)."""
    space = uniform_space(hier, k_mesh)
    coeff = Coefficient()
    phi = FeFunction(space, np.sin(np.pi * space.vertices[1:-1]))
    slopes = phi.slopes()
    verts = space.vertices

    def q(t):
        return np.exp(-t)

    def u_x(x, t):
        idx = np.clip(np.searchsorted(verts, x, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx] * q(t)

    ex = ManufacturedSolution(
        u=lambda x, t: phi(x) * q(t),
        u_t=lambda x, t: -phi(x) * q(t),
        u_x=u_x,
        u_xx=lambda x, t: np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape),
    )

    def load(sp, t):
        ops = SpatialOperators.get(sp, coeff)
        return -q(t) * ops.load_from_function(phi) + q(t) * ops.energy_pair(phi)

    problem = Problem(coeff=coeff, initial=lambda x: phi(x), final_time=T,
                      source=WeakSource(load), manufactured=ex, name="hat_expdecay")
    return problem, space


def alternating_spaces(hier, n_slabs: int, k_base: int = 4):
    """Meshes alternating between left-refined and right-refined: genuine
    coarsening (and refinement) across every time node."""
    base = uniform_space(hier, k_base)
    half = base.n_elements // 2
    left = split_elements(base, range(half))
    right = split_elements(base, range(half, base.n_elements))
    return [left if n % 2 == 0 else right for n in range(n_slabs)]


def alternating_run(hier, r: int = 1, n_slabs: int = 8, T: float = 1.0,
                    k_base: int = 4):
    problem = decay_problem(1.0, T)
    part = TimePartition.uniform(T, n_slabs, r)
    sol = solve_all(problem, part, alternating_spaces(hier, n_slabs, k_base))
    return problem, sol


def standard_run(hier, name="sinpi_expdecay", r=1, n_slabs=4, k=5, T=1.0):
    problem = make_problem(name, final_time=T)
    part = TimePartition.uniform(T, n_slabs, r)
    space = uniform_space(hier, k)
    sol = solve_all(problem, part, [space] * n_slabs)
    return problem, sol
