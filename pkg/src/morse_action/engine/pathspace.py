"""Piecewise-linear discretization of H^1([0,1], M).

A path is stored by its N+1 nodal values on the uniform mesh t_i = i/N, with
periodic coordinates kept lifted so that slopes are well defined. On each cell
the Lagrangian is evaluated once, at the cell midpoint with the cell slope.
Nodal vectors are flattened node-major: index i*n + j is coordinate j of node i.

Variations live in the constrained nodal space: interior nodes move freely,
the endpoint pair moves inside W. Its orthonormal basis B (a full_dim x m
matrix) turns full covectors into reduced ones (B^T g) and reduced vectors
into nodal ones (B c); every matrix in a HessianPencil is already reduced.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import LagrangianError, NonFiniteAction, UnsupportedFeature
from .lagrangian import LagrangianModel
from .manifold import BoundaryCondition, ChartedManifold, tangent_constraint_basis, wrap_difference

logger = logging.getLogger("MorseAction.pathspace")

DEFAULT_MESH = 256


@dataclass(frozen=True, eq=False)
class DiscretePath:
    nodes: np.ndarray
    manifold: ChartedManifold = field(repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float, copy=True)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.shape[1] != self.manifold.dim:
            raise ValueError(
                f"Error: path has {nodes.shape[1]} coordinates but the manifold has dimension {self.manifold.dim}")
        if nodes.shape[0] < 2:
            raise ValueError("Error: a path needs at least two nodes")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def cell_times(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.h

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @property
    def slopes(self) -> np.ndarray:
        return (self.nodes[1:] - self.nodes[:-1]) * self.N

    def flat(self) -> np.ndarray:
        return self.nodes.ravel().copy()

    def with_nodes(self, nodes) -> "DiscretePath":
        return DiscretePath(np.asarray(nodes, dtype=float).reshape(self.nodes.shape), self.manifold)

    def displaced(self, full_vector) -> "DiscretePath":
        return self.with_nodes(self.nodes + np.asarray(full_vector, dtype=float).reshape(self.nodes.shape))

    def winding(self) -> List[int]:
        """ integer endpoint offset of each periodic coordinate (0 for the others) """
        offset = self.nodes[-1] - self.nodes[0]
        return [int(np.round(d)) if p else 0 for d, p in zip(offset, self.manifold.periodic)]

    def resampled(self, N:int) -> "DiscretePath":
        t_new = np.linspace(0.0, 1.0, N + 1)
        cols = [np.interp(t_new, self.times, self.nodes[:, j]) for j in range(self.dim)]
        return DiscretePath(np.stack(cols, axis=1), self.manifold)

    def to_csv(self, filename:str) -> None:
        header = ",".join(["t"] + [f"q{j + 1}" for j in range(self.dim)])
        data = np.column_stack([self.times, self.nodes])
        np.savetxt(filename, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, filename:str, manifold:ChartedManifold) -> "DiscretePath":
        data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 1:], manifold)


def straight_line(m:ChartedManifold, start, end, N:int) -> DiscretePath:
    s = np.atleast_1d(np.asarray(start, dtype=float))
    e = np.atleast_1d(np.asarray(end, dtype=float))
    t = np.linspace(0.0, 1.0, N + 1)[:, None]
    return DiscretePath((1.0 - t) * s[None, :] + t * e[None, :], m)


def constant_path(m:ChartedManifold, point, N:int) -> DiscretePath:
    return straight_line(m, point, point, N)


@dataclass(frozen=True, eq=False)
class ConstrainedSpace:
    """ the bc-constrained nodal space with its orthonormal basis """

    manifold: ChartedManifold
    bc: BoundaryCondition
    N: int
    basis: np.ndarray = field(repr=False)
    endpoint_dim: int = 0

    @property
    def full_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def restrict(self, full) -> np.ndarray:
        return self.basis.T @ np.asarray(full, dtype=float).ravel()

    def extend(self, coords) -> np.ndarray:
        return self.basis @ np.asarray(coords, dtype=float)

    def reduce_matrix(self, full_matrix:np.ndarray) -> np.ndarray:
        reduced = self.basis.T @ full_matrix @ self.basis
        return 0.5 * (reduced + reduced.T)

    def difference(self, path:DiscretePath, reference:DiscretePath):
        """Reduced coordinates of path - reference, modulo a common integer lift.

        Returns (coords, leak) where leak is the size of the part of the nodal
        difference outside the constrained space (nonzero only when the two
        paths lie in different components, e.g. different windings).
        """
        diff = path.nodes - reference.nodes
        mask = self.manifold.periodic_mask
        if mask.any():
            shift = np.round(np.mean(diff, axis=0))
            diff = diff - np.where(mask, shift, 0.0)[None, :]
        flat = diff.ravel()
        coords = self.basis.T @ flat
        leak = float(np.max(np.abs(flat - self.basis @ coords))) if flat.size else 0.0
        return coords, leak


@lru_cache(maxsize=64)
def constrained_space(m:ChartedManifold, bc:BoundaryCondition, N:int) -> ConstrainedSpace:
    n = m.dim
    w = tangent_constraint_basis(bc, n)
    full_dim = (N + 1) * n
    cols = []
    for k in range(w.shape[1]):
        col = np.zeros(full_dim)
        col[:n] = w[:n, k]
        col[N * n:] = w[n:, k]
        cols.append(col)
    interior = np.zeros((full_dim, (N - 1) * n))
    interior[n:N * n, :] = np.eye((N - 1) * n)
    basis = np.column_stack(cols + [interior]) if cols else interior
    basis.setflags(write=False)
    return ConstrainedSpace(m, bc, N, basis, w.shape[1])


def _cell_data(L:LagrangianModel, gamma:DiscretePath):
    return gamma.cell_times, gamma.midpoints, gamma.slopes


def _check_finite(values:np.ndarray, what:str) -> None:
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    if bad.any():
        cell = int(np.flatnonzero(bad)[0])
        raise NonFiniteAction(f"Non-finite {what} on cell {cell}", cell=cell)


def action(L:LagrangianModel, gamma:DiscretePath) -> float:
    """ midpoint-rule action of a piecewise-linear path """
    t, q, v = _cell_data(L, gamma)
    values = np.asarray(L.eval(t, q, v), dtype=float)
    _check_finite(values, "Lagrangian value")
    return float(gamma.h * np.sum(values))


def gradient_full(L:LagrangianModel, gamma:DiscretePath) -> np.ndarray:
    """ exact gradient of the discrete action with respect to all nodal coordinates """
    t, q, v = _cell_data(L, gamma)
    Lq = np.asarray(L.d_q(t, q, v), dtype=float)
    Lv = np.asarray(L.d_v(t, q, v), dtype=float)
    _check_finite(Lq, "dL/dq")
    _check_finite(Lv, "dL/dv")
    h = gamma.h
    g = np.zeros_like(gamma.nodes)
    g[:-1] += 0.5 * h * Lq - Lv
    g[1:] += 0.5 * h * Lq + Lv
    return g.ravel()


def gradient(L:LagrangianModel, gamma:DiscretePath, bc:BoundaryCondition) -> np.ndarray:
    """ gradient covector in the reduced coordinates of the constrained space """
    space = constrained_space(gamma.manifold, bc, gamma.N)
    return space.restrict(gradient_full(L, gamma))


def _assemble_cells(N:int, n:int, aa, ab, ba, bb) -> np.ndarray:
    """ scatter per-cell 2x2 blocks (each of shape (N, n, n)) into a full nodal matrix """
    H = np.zeros((N + 1, n, N + 1, n))
    idx = np.arange(N)
    H[idx, :, idx, :] += aa
    H[idx, :, idx + 1, :] += ab
    H[idx + 1, :, idx, :] += ba
    H[idx + 1, :, idx + 1, :] += bb
    return H.reshape((N + 1) * n, (N + 1) * n)


def stiffness_full(weights:np.ndarray, h:float) -> np.ndarray:
    """ int <W xi', eta'> for per-cell weight matrices W of shape (N, n, n) """
    N, n = weights.shape[0], weights.shape[1]
    w = weights / h
    return _assemble_cells(N, n, w, -w, -w, w)


def mass_full(N:int, n:int, metric:Optional[np.ndarray]=None) -> np.ndarray:
    """ exact int <g xi, eta> for piecewise-linear xi, eta """
    g = np.eye(n) if metric is None else np.asarray(metric, dtype=float)
    h = 1.0 / N
    diag = np.broadcast_to(g * (h / 3.0), (N, n, n))
    off = np.broadcast_to(g * (h / 6.0), (N, n, n))
    return _assemble_cells(N, n, diag, off, off, diag)


def _second_variation_full(L:LagrangianModel, gamma:DiscretePath):
    """ returns (full Hessian of the discrete action, kinetic weights d2L/dv2 per cell) """
    t, q, v = _cell_data(L, gamma)
    h = gamma.h
    N, n = gamma.N, gamma.dim
    Lvv = np.asarray(L.d_vv(t, q, v), dtype=float)
    Lvq = np.asarray(L.d_vq(t, q, v), dtype=float)
    Lqq = np.asarray(L.d_qq(t, q, v), dtype=float)
    for arr, what in ((Lvv, "d2L/dv2"), (Lvq, "d2L/dvdq"), (Lqq, "d2L/dq2")):
        _check_finite(arr, what)
    Lvv = 0.5 * (Lvv + np.swapaxes(Lvv, 1, 2))
    Lqq = 0.5 * (Lqq + np.swapaxes(Lqq, 1, 2))
    LvqT = np.swapaxes(Lvq, 1, 2)
    sym = 0.5 * (Lvq + LvqT)
    skew = 0.5 * (LvqT - Lvq)
    quarter = 0.25 * h * Lqq
    kinetic = stiffness_full(Lvv, h)
    rest = _assemble_cells(N, n, quarter - sym, quarter + skew, quarter - skew, quarter + sym)
    return kinetic + rest, Lvv


@dataclass(frozen=True, eq=False)
class HessianPencil:
    """Reduced second variation with its Gram matrix and A + K split.

    H is the discrete second Gateaux differential, G the Gram matrix of the
    product in force, A_part the kinetic term plus the L^2 mass, K_part = H - A_part,
    G_kinetic the derivative block of G.
    """

    H: np.ndarray
    G: np.ndarray
    A_part: np.ndarray
    K_part: np.ndarray
    G_kinetic: np.ndarray
    space: ConstrainedSpace = field(repr=False)
    product: str = "zero"

    def check(self, ell2:Optional[float]=None) -> Dict[str, Any]:
        def asym(x):
            return float(np.max(np.abs(x - x.T))) if x.size else 0.0

        g_min = float(scipy.linalg.eigvalsh(self.G)[0]) if self.G.size else np.inf
        a_min = float(scipy.linalg.eigvalsh(self.A_part)[0]) if self.A_part.size else np.inf
        report = {
            "max_asymmetry": max(asym(self.H), asym(self.G), asym(self.A_part), asym(self.K_part)),
            "gram_min_eigenvalue": g_min,
            "a_part_min_eigenvalue": a_min,
            "split_defect": float(np.max(np.abs(self.H - self.A_part - self.K_part))) if self.H.size else 0.0,
        }
        if ell2 is not None and self.G_kinetic.size:
            bound = ell2 * float(scipy.linalg.eigvalsh(self.G_kinetic)[0]) - 1e-9
            report["a_part_lower_bound"] = bound
            report["a_part_bound_holds"] = a_min >= bound
        return report


def _require_flat_metric(m:ChartedManifold) -> np.ndarray:
    g = m.constant_metric()
    if g is None:
        raise UnsupportedFeature("The H^1 product is implemented for constant (flat-chart) metrics only")
    return g


def hilbert_product_h1(m:ChartedManifold, gamma:DiscretePath,
                       bc:Optional[BoundaryCondition]=None) -> np.ndarray:
    """ Gram matrix of int g(xi', eta') + int g(xi, eta) on the constrained space """
    g = _require_flat_metric(m)
    bc = bc or BoundaryCondition.free()
    N, n = gamma.N, gamma.dim
    space = constrained_space(m, bc, N)
    full = stiffness_full(np.broadcast_to(g, (N, n, n)), gamma.h) + mass_full(N, n, g)
    return space.reduce_matrix(full)


def hilbert_product_zero(L:LagrangianModel, gamma0:DiscretePath,
                         bc:Optional[BoundaryCondition]=None) -> np.ndarray:
    """ Gram matrix of int d2L/dv2(t, gamma0, gamma0') xi' . eta' + int xi . eta """
    bc = bc or BoundaryCondition.free()
    t, q, v = _cell_data(L, gamma0)
    Lvv = np.asarray(L.d_vv(t, q, v), dtype=float)
    Lvv = 0.5 * (Lvv + np.swapaxes(Lvv, 1, 2))
    min_eigs = np.linalg.eigvalsh(Lvv)[:, 0]
    if np.any(min_eigs <= 0.0):
        cell = int(np.argmin(min_eigs))
        raise LagrangianError(f"d2L/dv2 is not positive definite on cell {cell} (smallest eigenvalue {min_eigs[cell]:.3e})")
    space = constrained_space(gamma0.manifold, bc, gamma0.N)
    full = stiffness_full(Lvv, gamma0.h) + mass_full(gamma0.N, gamma0.dim)
    return space.reduce_matrix(full)


def hessian(L:LagrangianModel, gamma:DiscretePath, bc:BoundaryCondition,
            product:str="zero", center:Optional[DiscretePath]=None) -> HessianPencil:
    """Assemble the reduced second variation of the discrete action at gamma.

    product selects the Gram matrix G: "zero" is <.,.>_0 taken at center
    (gamma itself by default, in which case G equals A_part), "h1" the flat
    H^1 product.
    """
    N, n = gamma.N, gamma.dim
    space = constrained_space(gamma.manifold, bc, N)
    H_full, Lvv = _second_variation_full(L, gamma)
    mass = mass_full(N, n)
    A_full = stiffness_full(Lvv, gamma.h) + mass
    H = space.reduce_matrix(H_full)
    A_part = space.reduce_matrix(A_full)
    K_part = H - A_part
    if product == "h1":
        g = _require_flat_metric(gamma.manifold)
        G_kinetic = space.reduce_matrix(stiffness_full(np.broadcast_to(g, (N, n, n)), gamma.h))
        G = hilbert_product_h1(gamma.manifold, gamma, bc)
    elif product == "zero":
        if center is None or center is gamma:
            G = A_part.copy()
            G_kinetic = space.reduce_matrix(stiffness_full(Lvv, gamma.h))
        else:
            G = hilbert_product_zero(L, center, bc)
            tc, qc, vc = _cell_data(L, center)
            Lvv_c = np.asarray(L.d_vv(tc, qc, vc), dtype=float)
            G_kinetic = space.reduce_matrix(stiffness_full(0.5 * (Lvv_c + np.swapaxes(Lvv_c, 1, 2)), center.h))
    else:
        raise ValueError(f"Error: unknown product {product}, use one of: zero, h1")
    return HessianPencil(H=H, G=G, A_part=A_part, K_part=K_part, G_kinetic=G_kinetic, space=space, product=product)


def dual_norm(covector:np.ndarray, gram:np.ndarray) -> float:
    """ sqrt(g^T G^-1 g), the norm of a reduced covector with respect to the product gram """
    if covector.size == 0:
        return 0.0
    factor = scipy.linalg.cho_factor(gram)
    return float(np.sqrt(max(covector @ scipy.linalg.cho_solve(factor, covector), 0.0)))


def hessian_continuity_probe(L:LagrangianModel, gamma:DiscretePath, meshes:Sequence[int],
                             v=None, w=None) -> Dict[str, Any]:
    """Measure how far the discrete Hessian jumps under a concentrated perturbation.

    For each mesh N the path is resampled and perturbed by eta_eps, the path whose
    derivative is v on the single cell [1/2, 1/2 + eps], eps = 1/N, and 0 elsewhere.
    Reported per mesh: the operator norm of H(gamma + eta_eps) - H(gamma) relative to
    the H^1 Gram on the free nodal space, the norms of eta_eps, and the
    differentiability remainder
    (DS(gamma+eta)[xi] - DS(gamma)[xi] - d2S(gamma)[xi, eta]) / eps,
    with xi_eps built from w the same way. The gap stays bounded below for
    Lagrangians that are not fiber-wise quadratic, and decays otherwise.
    """
    n = gamma.dim
    v = np.ones(n) if v is None else np.atleast_1d(np.asarray(v, dtype=float))
    w = v.copy() if w is None else np.atleast_1d(np.asarray(w, dtype=float))
    free = BoundaryCondition.free()
    rows = []
    for N in meshes:
        if N < 2 or N % 2:
            raise ValueError(f"Error: probe meshes must be even, got {N}")
        base = gamma.resampled(N)
        eps = 1.0 / N
        ramp = np.zeros(N + 1)
        ramp[N // 2 + 1:] = eps
        eta = ramp[:, None] * v[None, :]
        xi = ramp[:, None] * w[None, :]
        bumped = base.with_nodes(base.nodes + eta)
        pencil0 = hessian(L, base, free, product="h1")
        pencil1 = hessian(L, bumped, free, product="h1")
        delta = pencil1.H - pencil0.H
        eigs = scipy.linalg.eigh(delta, pencil0.G, eigvals_only=True)
        gap = float(np.max(np.abs(eigs)))
        G = pencil0.G
        eta_flat = eta.ravel()
        xi_flat = xi.ravel()
        eta_r = pencil0.space.restrict(eta_flat)
        xi_r = pencil0.space.restrict(xi_flat)
        d1 = gradient_full(L, bumped) @ xi_flat
        d0 = gradient_full(L, base) @ xi_flat
        second = xi_r @ pencil0.H @ eta_r
        rows.append({
            "mesh": int(N),
            "epsilon": eps,
            "gap": gap,
            "eta_norm_h1": float(np.sqrt(eta_r @ G @ eta_r)),
            "eta_norm_derivative": float(np.linalg.norm(v) * np.sqrt(eps)),
            "remainder": float((d1 - d0 - second) / eps),
        })
        logger.debug(f"Hessian probe N={N}: gap {gap:.6g}")
    gaps = [r["gap"] for r in rows]
    return {
        "family": L.family,
        "lagrangian": L.name,
        "meshes": rows,
        "min_gap": min(gaps) if gaps else None,
        "max_gap": max(gaps) if gaps else None,
    }


def dump_matrix(filename:str, matrix:np.ndarray) -> None:
    """ dense text dump for debugging """
    np.savetxt(filename, np.atleast_2d(matrix), fmt="%.17g")


def load_matrix(filename:str) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(filename, dtype=float, ndmin=2))
