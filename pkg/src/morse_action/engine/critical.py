"""Critical points of the discrete action: Newton solver, Morse data, global sweep."""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import BoundaryConditionError, DegeneracyError, MorseActionError, NewtonFailure
from .lagrangian import LagrangianModel
from .manifold import BoundaryCondition, endpoint_residual, reduce_point
from .pathspace import (
    DiscretePath,
    HessianPencil,
    action,
    constrained_space,
    dual_norm,
    gradient,
    hessian,
    hilbert_product_h1,
    straight_line,
)

logger = logging.getLogger("MorseAction.critical")

NEWTON_TOL = 1e-10
NULL_TOL_REL = 1e-8
ARMIJO_C = 1e-4
DAMPING_FLOOR = 2.0 ** -20


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    path: DiscretePath = field(repr=False)
    bc: BoundaryCondition = field(repr=False)
    action_value: float
    morse_index: int
    nullity: int
    residual: float
    spectral_gap: float
    null_tol: float
    id: str = ""
    iterations: int = 0

    def to_record(self, path_csv_ref:Optional[str]=None) -> Dict[str, Any]:
        return {
            "id": self.id,
            "action": self.action_value,
            "index": self.morse_index,
            "nullity": self.nullity,
            "residual": self.residual,
            "spectral_gap": self.spectral_gap,
            "null_tol": self.null_tol,
            "winding": self.path.winding(),
            "path_csv_ref": path_csv_ref,
        }


def morse_index(pencil:HessianPencil, null_tol_rel:float=NULL_TOL_REL) -> Tuple[int, int, float, np.ndarray, float]:
    """Inertia of the pencil (H, G).

    Returns (index, nullity, spectral_gap, eigenvalues, null_tol) where null_tol is
    null_tol_rel times the spectral norm of H and spectral_gap is the smallest
    |eigenvalue| outside the null band.
    """
    H, G = pencil.H, pencil.G
    if H.size == 0:
        return 0, 0, np.inf, np.zeros(0), 0.0
    try:
        eigs = scipy.linalg.eigh(H, G, eigvals_only=True)
    except np.linalg.LinAlgError as e:
        raise DegeneracyError(f"Gram matrix of the pencil is not positive definite: {e}")
    null_tol = null_tol_rel * float(np.linalg.norm(H, 2))
    index = int(np.sum(eigs < -null_tol))
    nullity = int(np.sum(np.abs(eigs) <= null_tol))
    outside = np.abs(eigs[np.abs(eigs) > null_tol])
    gap = float(np.min(outside)) if outside.size else 0.0
    return index, nullity, gap, eigs, null_tol


def certify_L0(cp:CriticalPoint) -> bool:
    """ nondegenerate: trivial kernel and a spectral gap well outside the null band """
    return cp.nullity == 0 and cp.spectral_gap > 10.0 * cp.null_tol


def _solve_newton_step(H:np.ndarray, g:np.ndarray) -> Tuple[np.ndarray, bool]:
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(H, -g, assume_a="sym"), False
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            pass
    return -scipy.linalg.pinvh(H) @ g, True


def newton_solve(L:LagrangianModel, bc:BoundaryCondition, seed:DiscretePath, tol:float=NEWTON_TOL,
                 max_iter:int=60, box:float=1e3, null_tol_rel:float=NULL_TOL_REL) -> CriticalPoint:
    """Damped Newton on the constrained gradient.

    Damping is Armijo on the squared H^1 dual norm of the gradient with step
    halving down to 2^-20. Raises NewtonFailure on max-iterations, line-search
    failure or divergence (an H^1 step longer than box).
    """
    m = seed.manifold
    if endpoint_residual(m, bc, seed.nodes[0], seed.nodes[-1]) > 1e-9:
        raise BoundaryConditionError("Seed path does not satisfy the boundary condition")
    space = constrained_space(m, bc, seed.N)
    G = hilbert_product_h1(m, seed, bc)
    factor = scipy.linalg.cho_factor(G)

    def merit(g):
        return float(g @ scipy.linalg.cho_solve(factor, g)) if g.size else 0.0

    path = seed
    g = gradient(L, path, bc)
    phi = merit(g)
    iterations = 0
    while np.sqrt(phi) > tol:
        if iterations >= max_iter:
            raise NewtonFailure(f"Newton did not converge in {max_iter} iterations (residual {np.sqrt(phi):.3e})",
                                reason="max_iterations", residual=float(np.sqrt(phi)))
        pencil = hessian(L, path, bc)
        step, singular = _solve_newton_step(pencil.H, g)
        if singular:
            logger.warning(f"Singular Hessian at Newton iterate {iterations}, using a pseudo-inverse step")
        step_norm = float(np.sqrt(max(step @ G @ step, 0.0)))
        if not np.isfinite(step_norm) or step_norm > box:
            raise NewtonFailure(f"Newton step of H^1 norm {step_norm:.3e} exceeds the box bound {box}",
                                reason="divergence", residual=float(np.sqrt(phi)))
        alpha = 1.0
        while True:
            try:
                trial = path.displaced(space.extend(alpha * step))
                g_trial = gradient(L, trial, bc)
                phi_trial = merit(g_trial)
            except MorseActionError:
                phi_trial = np.inf
            if phi_trial <= (1.0 - ARMIJO_C * alpha) * phi:
                break
            alpha *= 0.5
            if alpha < DAMPING_FLOOR:
                raise NewtonFailure(f"Line search failed at iteration {iterations} (residual {np.sqrt(phi):.3e})",
                                    reason="line_search", residual=float(np.sqrt(phi)))
        path, g, phi = trial, g_trial, phi_trial
        iterations += 1

    pencil = hessian(L, path, bc)
    index, nullity, gap, _, null_tol = morse_index(pencil, null_tol_rel)
    cp = CriticalPoint(path=path, bc=bc, action_value=action(L, path), morse_index=index, nullity=nullity,
                       residual=float(np.sqrt(phi)), spectral_gap=gap, null_tol=null_tol, iterations=iterations)
    logger.debug(f"Newton converged in {iterations} iterations: action {cp.action_value:.10g}, "
                 f"index {index}, nullity {nullity}")
    return cp


@dataclass(frozen=True)
class SeedStrategy:
    """Seed family for the global sweep.

    kind is one of constant_grid, winding, fourier. Every seed adds a small
    sine series (vanishing at both ends, so every boundary condition is kept)
    drawn from a generator seeded with rng_seed.
    """

    kind: str = "fourier"
    count: int = 24
    windings: Tuple[int, ...] = (-2, -1, 0, 1, 2)
    amplitude: float = 6.0
    modes: int = 4
    noise: float = 0.02
    rng_seed: int = 0
    coordinate: int = 0


def _sine_series(N:int, n:int, coefficients:np.ndarray) -> np.ndarray:
    t = np.linspace(0.0, 1.0, N + 1)
    k = np.arange(1, coefficients.shape[0] + 1)
    basis = np.sin(np.pi * np.outer(t, k))
    return basis @ coefficients


def _base_endpoints(m, bc:BoundaryCondition, rng) -> Tuple[np.ndarray, np.ndarray]:
    n = m.dim
    if bc.kind == "dirichlet":
        return np.asarray(bc.p, dtype=float), np.asarray(bc.q, dtype=float)
    if bc.kind == "subspace":
        anchor = np.asarray(bc.anchor, dtype=float)
        return anchor[:n], anchor[n:]
    point = np.where(m.periodic_mask, rng.uniform(0.0, 1.0, n), rng.uniform(-1.0, 1.0, n))
    return point, point.copy()


def generate_seeds(m, bc:BoundaryCondition, N:int, strategy:SeedStrategy) -> List[DiscretePath]:
    n = m.dim
    rng = np.random.default_rng(strategy.rng_seed)
    seeds = []

    def noisy(nodes):
        coeffs = rng.normal(0.0, strategy.noise, size=(strategy.modes, n))
        return DiscretePath(nodes + _sine_series(N, n, coeffs), m)

    if strategy.kind == "constant_grid":
        if bc.kind not in ("periodic", "free"):
            raise ValueError("Error: constant seeds need periodic or free boundary conditions")
        per_axis = max(2, int(round(strategy.count ** (1.0 / n))))
        axes = []
        for j in range(n):
            if m.periodic[j]:
                axes.append(np.arange(per_axis) / per_axis)
            else:
                axes.append(np.linspace(-strategy.amplitude, strategy.amplitude, per_axis))
        grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n, -1).T
        for point in grid:
            seeds.append(noisy(np.tile(point, (N + 1, 1))))
    elif strategy.kind == "winding":
        j = strategy.coordinate
        if not m.periodic[j]:
            raise ValueError(f"Error: winding seeds need a periodic coordinate, coordinate {j} is not periodic")
        start, end = _base_endpoints(m, bc, rng)
        if bc.kind == "free":
            raise ValueError("Error: winding seeds need dirichlet, periodic or subspace boundary conditions")
        for k in strategy.windings:
            target = end.copy()
            target[j] += k
            seeds.append(noisy(straight_line(m, start, target, N).nodes))
    elif strategy.kind == "fourier":
        for _ in range(strategy.count):
            start, end = _base_endpoints(m, bc, rng)
            line = straight_line(m, start, end, N).nodes
            k = np.arange(1, strategy.modes + 1)[:, None]
            coeffs = rng.uniform(-strategy.amplitude, strategy.amplitude, size=(strategy.modes, n)) / k ** 2
            seeds.append(DiscretePath(line + _sine_series(N, n, coeffs), m))
    else:
        raise ValueError(f"Error: unknown seed strategy {strategy.kind}, use one of: constant_grid, winding, fourier")
    return seeds


def normalize_lift(path:DiscretePath) -> DiscretePath:
    """ translate periodic coordinates by an integer so that the first node lies in [0,1) """
    m = path.manifold
    if not m.periodic_mask.any():
        return path
    shift = np.where(m.periodic_mask, np.floor(path.nodes[0] + 1e-9), 0.0)
    return path.with_nodes(path.nodes - shift[None, :])


def lifted_distance(a:DiscretePath, b:DiscretePath) -> float:
    """ L-infinity distance modulo a common integer translation of periodic coordinates """
    diff = a.nodes - b.nodes
    mask = a.manifold.periodic_mask
    if mask.any():
        diff = diff - np.where(mask, np.round(np.mean(diff, axis=0)), 0.0)[None, :]
    return float(np.max(np.abs(diff)))


def _sort_key(cp:CriticalPoint):
    centroid = reduce_point(cp.path.manifold, np.mean(cp.path.nodes, axis=0))
    return (round(cp.action_value, 7), tuple(np.round(centroid, 6)))


def deduplicate(cps:Sequence[CriticalPoint], action_tol:float=1e-8, path_tol:float=1e-4) -> List[CriticalPoint]:
    """ drop repeated critical points, sort by action and assign stable ids """
    ordered = sorted(cps, key=_sort_key)
    kept: List[CriticalPoint] = []
    for cp in ordered:
        duplicate = any(abs(cp.action_value - other.action_value) <= action_tol
                        and lifted_distance(cp.path, other.path) <= path_tol for other in kept)
        if not duplicate:
            kept.append(cp)
    return [replace(cp, id=f"cp-{i:03d}") for i, cp in enumerate(kept)]


def seed_sweep(L:LagrangianModel, bc:BoundaryCondition, strategy:SeedStrategy, manifold, N:int,
               workers:int=1, dedup_action_tol:float=1e-8, dedup_path_tol:float=1e-4,
               **newton_options) -> List[CriticalPoint]:
    """Run newton_solve over a seed family and return the distinct critical points
    sorted by action. Seeds that fail are logged and skipped."""
    seeds = generate_seeds(manifold, bc, N, strategy)

    def solve(indexed):
        i, seed = indexed
        try:
            cp = newton_solve(L, bc, seed, **newton_options)
        except MorseActionError as e:
            logger.warning(f"Seed {i} ({strategy.kind}) failed: {e}")
            return None
        return replace(cp, path=normalize_lift(cp.path))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, enumerate(seeds)))
    else:
        results = [solve(item) for item in enumerate(seeds)]
    found = [cp for cp in results if cp is not None]
    logger.info(f"Seed sweep ({strategy.kind}): {len(found)} of {len(seeds)} seeds converged")
    return deduplicate(found, dedup_action_tol, dedup_path_tol)


def ps_diagnostic(L:LagrangianModel, bc:BoundaryCondition, trajectory_tail:Sequence[DiscretePath],
                  grad_tol:float=1e-8) -> Dict[str, Any]:
    """Palais-Smale symptoms along the tail of a trajectory.

    Reports actions, H^1 gradient norms and H^1 increments between consecutive
    paths. A tail whose gradient does not go to zero while its action stays
    bounded is flagged as a PS-violation symptom; an action that keeps
    decreasing while the paths grow is flagged as an escape.
    """
    if not trajectory_tail:
        raise ValueError("Error: the trajectory tail is empty")
    m = trajectory_tail[0].manifold
    G = hilbert_product_h1(m, trajectory_tail[0], bc)
    space = constrained_space(m, bc, trajectory_tail[0].N)
    actions = [action(L, p) for p in trajectory_tail]
    grads = [dual_norm(gradient(L, p, bc), G) for p in trajectory_tail]
    sizes = [float(np.max(np.abs(p.nodes))) for p in trajectory_tail]
    increments = []
    for a, b in zip(trajectory_tail[:-1], trajectory_tail[1:]):
        coords, _ = space.difference(b, a)
        increments.append(float(np.sqrt(max(coords @ G @ coords, 0.0))))
    converged = grads[-1] <= grad_tol
    half = len(trajectory_tail) // 2
    growing = len(sizes) > 1 and all(y >= x for x, y in zip(sizes[half:-1], sizes[half + 1:])) and sizes[-1] > sizes[0]
    decreasing = len(actions) > 1 and all(y <= x for x, y in zip(actions[:-1], actions[1:]))
    grad_not_decaying = len(grads) > 1 and grads[-1] >= grads[half]
    escape = bool(not converged and growing and decreasing and grad_not_decaying)
    ps_symptom = bool(not converged and not escape and min(grads) > 100.0 * grad_tol
                      and np.isfinite(actions).all())
    return {
        "actions": actions,
        "gradient_norms": grads,
        "increments": increments,
        "converged": bool(converged),
        "escape": escape,
        "ps_violation_symptom": ps_symptom,
    }
