"""Configuration manifolds in a single global chart and linearized boundary conditions.

A manifold is R^k x T^m written in one chart: every coordinate is either a real
line or a circle of period 1. The boundary submanifold Q of M x M is carried by
its linearization W (a subspace of endpoint perturbations) plus an anchor.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from .errors import BoundaryConditionError, ManifoldError

logger = logging.getLogger("MorseAction.manifold")

MetricFn = Callable[[np.ndarray], np.ndarray]

PERIODIC_SYMMETRY_TOL = 1e-12


def _identity_metric(dim:int) -> MetricFn:
    eye = np.eye(dim)

    def metric(q:np.ndarray) -> np.ndarray:
        return eye.copy()

    return metric


@dataclass(frozen=True)
class ChartedManifold:
    """ R^k x T^m in one chart, periodic coordinates have period 1 """

    dim: int
    periodic: Tuple[bool, ...]
    metric: MetricFn = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ManifoldError(f"Manifold dimension must be positive, got {self.dim}")
        if len(self.periodic) != self.dim:
            raise ManifoldError(
                f"Periodic mask has length {len(self.periodic)} but the manifold has dimension {self.dim}")
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if self.metric is None:
            object.__setattr__(self, "metric", _identity_metric(self.dim))

    @classmethod
    def euclidean(cls, dim:int) -> "ChartedManifold":
        return cls(dim, (False,) * dim)

    @classmethod
    def torus(cls, dim:int) -> "ChartedManifold":
        return cls(dim, (True,) * dim)

    @property
    def periodic_mask(self) -> np.ndarray:
        return np.array(self.periodic, dtype=bool)

    @property
    def is_compact(self) -> bool:
        return all(self.periodic)

    def metric_at(self, q:np.ndarray) -> np.ndarray:
        return np.asarray(self.metric(np.asarray(q, dtype=float)), dtype=float)

    def check(self, n_samples:int=64, seed:int=0) -> Dict[str, Any]:
        """Sample the metric: symmetric positive definite everywhere and invariant
        under unit translation of each periodic coordinate."""
        rng = np.random.default_rng(seed)
        worst_eig = np.inf
        worst_asym = 0.0
        worst_shift = 0.0
        for _ in range(n_samples):
            q = rng.uniform(-2.0, 2.0, size=self.dim)
            g = self.metric_at(q)
            worst_asym = max(worst_asym, float(np.max(np.abs(g - g.T))))
            worst_eig = min(worst_eig, float(np.min(np.linalg.eigvalsh(0.5 * (g + g.T)))))
            for i in np.flatnonzero(self.periodic_mask):
                shifted = q.copy()
                shifted[i] += 1.0
                worst_shift = max(worst_shift, float(np.max(np.abs(self.metric_at(shifted) - g))))
        return {
            "symmetric": worst_asym <= PERIODIC_SYMMETRY_TOL,
            "positive_definite": worst_eig > 0.0,
            "periodic_invariant": worst_shift <= PERIODIC_SYMMETRY_TOL,
            "min_eigenvalue": worst_eig,
            "max_asymmetry": worst_asym,
            "max_periodic_shift": worst_shift,
        }

    def constant_metric(self, n_samples:int=16, seed:int=0) -> Optional[np.ndarray]:
        """ the metric matrix when it is constant on samples, otherwise None """
        rng = np.random.default_rng(seed)
        g0 = self.metric_at(np.zeros(self.dim))
        for _ in range(n_samples):
            q = rng.uniform(-2.0, 2.0, size=self.dim)
            if np.max(np.abs(self.metric_at(q) - g0)) > PERIODIC_SYMMETRY_TOL:
                return None
        return g0


def reduce_point(m:ChartedManifold, q) -> np.ndarray:
    """ map periodic coordinates to [0,1), leave the others alone """
    q = np.array(q, dtype=float, copy=True)
    mask = np.broadcast_to(m.periodic_mask, q.shape)
    reduced = np.mod(q, 1.0)
    # mod of a tiny negative number rounds up to exactly 1.0
    reduced = np.where(reduced >= 1.0, 0.0, reduced)
    return np.where(mask, reduced, q)


def wrap_difference(m:ChartedManifold, d) -> np.ndarray:
    """ difference vector with periodic coordinates taken to the nearest representative """
    d = np.array(d, dtype=float, copy=True)
    mask = np.broadcast_to(m.periodic_mask, d.shape)
    return np.where(mask, d - np.round(d), d)


@dataclass(frozen=True)
class BoundaryCondition:
    """Linearized boundary submanifold Q of M x M.

    kind is one of dirichlet, periodic, free, subspace. For subspace, basis holds
    k vectors of length 2n (rows) spanning W and anchor is an endpoint pair in Q.
    """

    kind: str
    p: Optional[Tuple[float, ...]] = None
    q: Optional[Tuple[float, ...]] = None
    basis: Optional[Tuple[Tuple[float, ...], ...]] = None
    anchor: Optional[Tuple[float, ...]] = None

    @classmethod
    def dirichlet(cls, p, q) -> "BoundaryCondition":
        return cls("dirichlet", p=tuple(np.atleast_1d(np.asarray(p, dtype=float))),
                   q=tuple(np.atleast_1d(np.asarray(q, dtype=float))))

    @classmethod
    def periodic_loops(cls) -> "BoundaryCondition":
        return cls("periodic")

    @classmethod
    def free(cls) -> "BoundaryCondition":
        return cls("free")

    @classmethod
    def subspace(cls, basis, anchor) -> "BoundaryCondition":
        rows = np.atleast_2d(np.asarray(basis, dtype=float))
        return cls("subspace", basis=tuple(tuple(r) for r in rows),
                   anchor=tuple(np.asarray(anchor, dtype=float).ravel()))

    def validate(self, m:ChartedManifold) -> None:
        n = m.dim
        if self.kind == "dirichlet":
            if self.p is None or self.q is None or len(self.p) != n or len(self.q) != n:
                raise BoundaryConditionError(f"Dirichlet endpoints must both be points of dimension {n}")
        elif self.kind == "subspace":
            if self.basis is None or self.anchor is None:
                raise BoundaryConditionError("Subspace condition needs a basis and an anchor pair")
            if len(self.anchor) != 2 * n:
                raise BoundaryConditionError(f"Anchor pair must have length {2 * n}, got {len(self.anchor)}")
            tangent_constraint_basis(self, n)
        elif self.kind not in ("periodic", "free"):
            raise BoundaryConditionError(
                f"Unknown boundary kind {self.kind}, use one of these kinds: dirichlet, periodic, free, subspace")


def tangent_constraint_basis(bc:BoundaryCondition, n:int) -> np.ndarray:
    """Orthonormal basis of W, the endpoint perturbations (xi(0), xi(1)) allowed by bc.

    Returns a (2n, dim W) array whose columns are orthonormal.
    """
    if bc.kind == "dirichlet":
        return np.zeros((2 * n, 0))
    if bc.kind == "free":
        return np.eye(2 * n)
    if bc.kind == "periodic":
        return np.vstack([np.eye(n), np.eye(n)]) / np.sqrt(2.0)
    if bc.kind == "subspace":
        rows = np.atleast_2d(np.asarray(bc.basis, dtype=float))
        if rows.shape[1] != 2 * n:
            raise BoundaryConditionError(f"Subspace vectors must have length {2 * n}, got {rows.shape[1]}")
        k = rows.shape[0]
        rank = np.linalg.matrix_rank(rows)
        if rank < k:
            raise BoundaryConditionError(
                f"Subspace basis is rank deficient: {k} vectors span a space of dimension {rank}")
        q, r = np.linalg.qr(rows.T)
        # positive diagonal of r
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        return q * signs
    raise BoundaryConditionError(f"Unknown boundary kind {bc.kind}")


def constraint_projector(bc:BoundaryCondition, n:int) -> np.ndarray:
    w = tangent_constraint_basis(bc, n)
    return w @ w.T


def endpoint_residual(m:ChartedManifold, bc:BoundaryCondition, q0, q1) -> float:
    """ distance of the endpoint pair from the linearized constraint, modulo periodic lifts """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if bc.kind == "free":
        return 0.0
    if bc.kind == "dirichlet":
        d0 = wrap_difference(m, q0 - np.asarray(bc.p))
        d1 = wrap_difference(m, q1 - np.asarray(bc.q))
        return float(np.max(np.abs(np.concatenate([d0, d1]))))
    if bc.kind == "periodic":
        return float(np.max(np.abs(wrap_difference(m, q1 - q0))))
    n = m.dim
    pair = np.concatenate([q0, q1]) - np.asarray(bc.anchor)
    pair = np.concatenate([wrap_difference(m, pair[:n]), wrap_difference(m, pair[n:])])
    proj = constraint_projector(bc, n)
    return float(np.max(np.abs(pair - proj @ pair)))


def check_ps_admissible(m:ChartedManifold, bc:BoundaryCondition):
    """Palais-Smale admissibility: at least one endpoint projection of Q is bounded.

    Returns (admissible, report). A False answer is a diagnostic, not a failure.
    """
    n = m.dim
    if m.is_compact:
        return True, {
            "admissible": True,
            "reason": "compact manifold, every projection of Q is bounded",
            "bounded_projections": [True, True],
        }
    w = tangent_constraint_basis(bc, n)
    free_dirs = ~m.periodic_mask
    bounded = []
    for factor in range(2):
        block = w[factor * n:(factor + 1) * n, :]
        bounded.append(bool(block.size == 0 or np.allclose(block[free_dirs, :], 0.0, atol=1e-12)))
    admissible = any(bounded)
    if admissible:
        reason = "endpoint projection bounded on factor " + ", ".join(str(i) for i, b in enumerate(bounded) if b)
    else:
        reason = "both endpoint projections of Q are unbounded"
    logger.debug(f"PS admissibility for {bc.kind}: {admissible} ({reason})")
    return admissible, {"admissible": admissible, "reason": reason, "bounded_projections": bounded}
