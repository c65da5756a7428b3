import json
import os

import numpy as np
import pytest

from morse_action.engine.critical import deduplicate, newton_solve
from morse_action.engine.families import duffing, free_particle, pendulum
from morse_action.engine.manifold import BoundaryCondition, ChartedManifold
from morse_action.engine.pathspace import DiscretePath, constant_path
from morse_action.engine.pseudograd import assemble_field

PROBLEMS_DIRECTORY = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "problems")

DUFFING_OMEGA = 1.5 * np.pi


@pytest.fixture
def circle():
    return ChartedManifold.torus(1)


@pytest.fixture
def line():
    return ChartedManifold.euclidean(1)


@pytest.fixture
def problem_file(tmp_path):
    """ copy a bundled problem into tmp_path, with its output directory inside tmp_path """
    def make(name, **overrides):
        with open(os.path.join(PROBLEMS_DIRECTORY, f"{name}.json"), "r") as f:
            raw = json.load(f)
        raw.update(overrides)
        raw["output"] = str(tmp_path / "out" / name)
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(raw))
        return str(path)
    return make


@pytest.fixture(scope="session")
def pendulum_problem():
    """ (L, bc, [minimum q=0, saddle q=1/2]) on the circle at N = 32 """
    m = ChartedManifold.torus(1)
    bc = BoundaryCondition.periodic_loops()
    L = pendulum(0.5)
    found = [newton_solve(L, bc, constant_path(m, [q0], 32)) for q0 in (0.0, 0.5)]
    return L, bc, deduplicate(found)


@pytest.fixture(scope="session")
def duffing_problem():
    """ (L, bc, [minimum below, minimum above, saddle at 0]) on the line at N = 64 """
    m = ChartedManifold.euclidean(1)
    bc = BoundaryCondition.dirichlet([0.0], [0.0])
    L = duffing(omega=DUFFING_OMEGA, quartic=0.25)
    t = np.linspace(0.0, 1.0, 65)
    seeds = [DiscretePath(a * np.sin(np.pi * t), m) for a in (-4.0, 4.0, 0.0)]
    return L, bc, deduplicate([newton_solve(L, bc, s) for s in seeds])


@pytest.fixture(scope="session")
def free_loops_problem():
    m = ChartedManifold.torus(1)
    bc = BoundaryCondition.periodic_loops()
    L = free_particle()
    return L, bc, deduplicate([newton_solve(L, bc, constant_path(m, [0.25], 32))])


@pytest.fixture(scope="session")
def pendulum_field(pendulum_problem):
    L, bc, cps = pendulum_problem
    return assemble_field(cps, L, bc, samples=50)


@pytest.fixture(scope="session")
def duffing_field(duffing_problem):
    L, bc, cps = duffing_problem
    return assemble_field(cps, L, bc, samples=50)
