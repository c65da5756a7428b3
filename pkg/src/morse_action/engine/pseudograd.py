"""Smooth pseudo-gradient field for the discrete action and its flow.

Near every certified critical point the field is the linear field
Y(g) = -G0^-1 H (g - g0) taken in the <.,.>_0 product of that point; away from
them it is the negative H^1 gradient. A smooth bump on the annulus
r_in <= |g - g0|_0 <= r_out blends the two, and a conformal cap keeps
the H^1 norm of the result below cap_bound. All vectors are in the reduced
coordinates of the constrained space.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.integrate import RK45

from .critical import CriticalPoint, certify_L0, morse_index
from .errors import (
    AmbiguousTerminal,
    BoundaryConditionError,
    CalibrationError,
    DegeneracyError,
    FlowError,
    MorseActionError,
    OverlappingBalls,
)
from .lagrangian import LagrangianModel
from .manifold import BoundaryCondition, endpoint_residual
from .pathspace import (
    ConstrainedSpace,
    DiscretePath,
    HessianPencil,
    action,
    constrained_space,
    gradient,
    hessian,
    hilbert_product_h1,
)

logger = logging.getLogger("MorseAction.pseudograd")

ACTION_SLACK = 1e-10
LEAK_TOL = 1e-9


def certify_spectral_gap(cp:CriticalPoint, pencil:HessianPencil) -> float:
    """ mu, the distance of the pencil spectrum from zero at a certified critical point """
    if not certify_L0(cp):
        raise DegeneracyError(f"Critical point {cp.id or '<unnamed>'} is degenerate (nullity {cp.nullity})",
                              ids=[cp.id])
    _, nullity, gap, _, null_tol = morse_index(pencil)
    if nullity > 0 or gap <= 10.0 * null_tol:
        raise DegeneracyError(f"Pencil at {cp.id or '<unnamed>'} has no certified spectral gap", ids=[cp.id])
    return gap


def unstable_basis(cp:CriticalPoint, pencil:HessianPencil) -> np.ndarray:
    """G0-orthonormal eigenvectors of negative eigenvalues, as columns.

    Each vector is signed so that its first nonzero nodal component is positive.
    """
    if cp.nullity > 0:
        raise DegeneracyError(f"Critical point {cp.id or '<unnamed>'} is degenerate (nullity {cp.nullity})",
                              ids=[cp.id])
    if pencil.H.size == 0:
        return np.zeros((0, 0))
    eigs, vecs = scipy.linalg.eigh(pencil.H, pencil.G)
    null_tol = cp.null_tol
    vecs = vecs[:, eigs < -null_tol]
    for j in range(vecs.shape[1]):
        nodal = pencil.space.extend(vecs[:, j])
        scale = np.max(np.abs(nodal))
        first = nodal[np.flatnonzero(np.abs(nodal) > 1e-8 * scale)[0]]
        if first < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def smooth_step(x:float) -> float:
    """ C-infinity step: 0 for x <= 0, 1 for x >= 1 """
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    a = np.exp(-1.0 / x)
    b = np.exp(-1.0 / (1.0 - x))
    return float(a / (a + b))


def cap_profile(s:float, cap_bound:float) -> float:
    """s * chi(s): the identity up to cap_bound/2, then a C^2 tanh approach to cap_bound."""
    half = 0.5 * cap_bound
    if s <= half:
        return s
    return half + half * float(np.tanh((s - half) / half))


@dataclass(frozen=True, eq=False)
class LocalLinearField:
    center: CriticalPoint = field(repr=False)
    hessian_op: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    radius_r_in: float
    radius_r_out: float
    lam: float
    mu: float
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    def norm(self, coords:np.ndarray) -> float:
        return float(np.sqrt(max(coords @ self.gram @ coords, 0.0)))

    def scaled(self, factor:float) -> "LocalLinearField":
        return LocalLinearField(self.center, self.hessian_op, self.gram, self.radius_r_in * factor,
                                self.radius_r_out * factor, self.lam, self.mu, self.eigenvalues, self.eigenvectors)

    def to_record(self) -> Dict[str, Any]:
        return {
            "center": self.center.id,
            "index": self.center.morse_index,
            "r_in": self.radius_r_in,
            "r_out": self.radius_r_out,
            "lambda": self.lam,
            "mu": self.mu,
            "nu": min(0.5, self.mu),
        }


def _local_operator(pencil:HessianPencil) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    eigs, vecs = scipy.linalg.eigh(pencil.H, pencil.G)
    op = scipy.linalg.solve(pencil.G, pencil.H, assume_a="pos")
    return op, eigs, vecs


def sample_displacements(eigenvectors:np.ndarray, rng, count:int, r_low:float, r_high:float) -> np.ndarray:
    """Random reduced displacements with <.,.>_0 norm uniform in [r_low, r_high].

    Coefficients in the G0-orthonormal eigenbasis are Gaussian with weights
    1/(1+j), which favours the low modes of the pencil.
    """
    m = eigenvectors.shape[1]
    weights = 1.0 / (1.0 + np.arange(m))
    coeffs = rng.normal(size=(count, m)) * weights[None, :]
    coeffs /= np.linalg.norm(coeffs, axis=1)[:, None]
    radii = rng.uniform(r_low, r_high, size=count)
    return (coeffs * radii[:, None]) @ eigenvectors.T


def _inequality_margins(L:LagrangianModel, bc:BoundaryCondition, cp:CriticalPoint, space:ConstrainedSpace,
                        op:np.ndarray, gram:np.ndarray, h1_factor, displacements:np.ndarray, lam:float, nu:float):
    """ worst margins of DS[Y] <= -lam |d|_0^2 and DS[Y] <= -nu |grad|^2 over the displacements """
    worst_lam = -np.inf
    worst_nu = -np.inf
    for d in displacements:
        try:
            g = gradient(L, cp.path.displaced(space.extend(d)), bc)
        except MorseActionError:
            return np.inf, np.inf
        y = -(op @ d)
        ds = float(g @ y)
        grad_sq = float(g @ scipy.linalg.cho_solve(h1_factor, g))
        worst_lam = max(worst_lam, ds + lam * float(d @ gram @ d))
        worst_nu = max(worst_nu, ds + nu * grad_sq)
    return worst_lam, worst_nu


def calibrate_radius(cp:CriticalPoint, pencil:HessianPencil, L:LagrangianModel, bc:BoundaryCondition,
                     r0:float=0.5, floor:float=1e-6, samples:int=200, seed:int=0) -> Tuple[float, float, float]:
    """Largest radius r = r0 / 2^k where the sampled Lyapunov inequalities hold.

    The target constant is lambda = mu^2/2. Samples are drawn on the shell
    r/2 <= |d|_0 <= r and in the ball |d|_0 <= r. Returns (r/2, r, lambda).
    The result is a sampled certificate, not a proof.
    """
    mu = certify_spectral_gap(cp, pencil)
    lam = 0.5 * mu ** 2
    nu = min(0.5, mu)
    space = pencil.space
    op, _, vecs = _local_operator(pencil)
    h1_factor = scipy.linalg.cho_factor(hilbert_product_h1(cp.path.manifold, cp.path, bc))
    rng = np.random.default_rng(seed)
    r = r0
    while r >= floor:
        shell = sample_displacements(vecs, rng, samples, 0.5 * r, r)
        interior = sample_displacements(vecs, rng, samples, 0.0, r)
        worst_lam, worst_nu = _inequality_margins(L, bc, cp, space, op, pencil.G, h1_factor,
                                                  np.vstack([shell, interior]), lam, nu)
        if worst_lam <= 0.0 and worst_nu <= 0.0:
            logger.info(f"Calibrated {cp.id or '<unnamed>'}: r_out {r:.3e}, lambda {lam:.4g}, mu {mu:.4g}")
            return 0.5 * r, r, lam
        logger.debug(f"Radius {r:.3e} rejected at {cp.id or '<unnamed>'} "
                     f"(margins {worst_lam:.3e}, {worst_nu:.3e}), halving")
        r *= 0.5
    raise CalibrationError(
        f"Radius underflow below {floor} at {cp.id or '<unnamed>'}: near-degenerate point or mesh too coarse")


class PseudoGradientField:
    """Blended and capped pseudo-gradient field on the constrained path space."""

    def __init__(self, L:LagrangianModel, bc:BoundaryCondition, space:ConstrainedSpace,
                 locals_:Sequence[LocalLinearField], h1_gram:np.ndarray, cap_bound:float=10.0):
        self.L = L
        self.bc = bc
        self.space = space
        self.locals = list(locals_)
        self.h1_gram = h1_gram
        self.h1_factor = scipy.linalg.cho_factor(h1_gram) if h1_gram.size else None
        self.cap_bound = cap_bound

    def h1_norm(self, coords:np.ndarray) -> float:
        return float(np.sqrt(max(coords @ self.h1_gram @ coords, 0.0)))

    def gradient_norm(self, g:np.ndarray) -> float:
        if g.size == 0:
            return 0.0
        return float(np.sqrt(max(g @ scipy.linalg.cho_solve(self.h1_factor, g), 0.0)))

    def nearest(self, path:DiscretePath) -> Optional[Tuple[int, np.ndarray, float]]:
        """ (local index, displacement, <.,.>_0 distance) of the center whose r_out ball is closest """
        best = None
        for i, loc in enumerate(self.locals):
            d, leak = self.space.difference(path, loc.center.path)
            if leak > LEAK_TOL:
                continue
            rho = loc.norm(d)
            ratio = rho / loc.radius_r_out
            if best is None or ratio < best[0]:
                best = (ratio, i, d, rho)
        if best is None:
            return None
        return best[1], best[2], best[3]

    def blend_weight(self, loc:LocalLinearField, rho:float) -> float:
        x = (loc.radius_r_out - rho) / (loc.radius_r_out - loc.radius_r_in)
        return smooth_step(x)

    def __call__(self, path:DiscretePath) -> np.ndarray:
        hit = self.nearest(path)
        if hit is not None:
            i, d, rho = hit
            loc = self.locals[i]
            if rho <= loc.radius_r_in:
                x = -(loc.hessian_op @ d)
                return self._capped(x)
        g = gradient(self.L, path, self.bc)
        descent = -scipy.linalg.cho_solve(self.h1_factor, g)
        if hit is not None and rho < loc.radius_r_out:
            beta = self.blend_weight(loc, rho)
            x = beta * -(loc.hessian_op @ d) + (1.0 - beta) * descent
        else:
            x = descent
        return self._capped(x)

    def _capped(self, x:np.ndarray) -> np.ndarray:
        s = self.h1_norm(x)
        if s <= 0.5 * self.cap_bound:
            return x
        return x * (cap_profile(s, self.cap_bound) / s)

    def dump(self) -> Dict[str, Any]:
        return {
            "lagrangian": self.L.name,
            "boundary": self.bc.kind,
            "mesh": self.space.N,
            "cap_bound": self.cap_bound,
            "locals": [loc.to_record() for loc in self.locals],
        }


def _enforce_cap(loc:LocalLinearField, h1_gram:np.ndarray, cap_bound:float) -> LocalLinearField:
    """ shrink a ball so that the linear field stays below cap_bound/2 on it """
    # |Y|_H1 <= kappa * max|eig| * |d|_0 with kappa^2 the largest eigenvalue of (H1, G0)
    kappa = float(np.sqrt(scipy.linalg.eigh(h1_gram, loc.gram, eigvals_only=True)[-1]))
    bound = kappa * float(np.max(np.abs(loc.eigenvalues)))
    # margin for the nonlinear part of the gradient inside the annulus
    limit = 0.5 * cap_bound / (1.5 * bound) if bound > 0 else np.inf
    if loc.radius_r_out <= limit:
        return loc
    logger.info(f"Shrinking ball at {loc.center.id} from {loc.radius_r_out:.3e} to {limit:.3e} to respect the cap")
    return loc.scaled(limit / loc.radius_r_out)


def _separate(locals_:List[LocalLinearField], space:ConstrainedSpace, floor:float) -> List[LocalLinearField]:
    factor = 1.0
    for i, a in enumerate(locals_):
        for j, b in enumerate(locals_):
            if i == j:
                continue
            d, leak = space.difference(b.center.path, a.center.path)
            if leak > LEAK_TOL:
                continue
            dist = a.norm(d)
            kappa = float(np.sqrt(scipy.linalg.eigh(a.gram, b.gram, eigvals_only=True)[-1]))
            need = a.radius_r_out + kappa * b.radius_r_out
            if need >= dist:
                factor = min(factor, 0.9 * dist / need)
                if factor * min(a.radius_r_out, b.radius_r_out) < floor:
                    raise OverlappingBalls(f"Balls around {a.center.id} and {b.center.id} overlap below the radius floor",
                                           pair=(a.center.id, b.center.id))
    if factor < 1.0:
        logger.warning(f"Overlapping balls, shrinking every radius by {factor:.3g}")
        return [loc.scaled(factor) for loc in locals_]
    return locals_


def assemble_field(cps:Sequence[CriticalPoint], L:LagrangianModel, bc:BoundaryCondition, cap_bound:float=10.0,
                   r0:float=0.5, floor:float=1e-6, samples:int=200, seed:int=0) -> PseudoGradientField:
    if not cps:
        raise ValueError("Error: a pseudo-gradient field needs at least one critical point")
    degenerate = [cp.id for cp in cps if not certify_L0(cp)]
    if degenerate:
        raise DegeneracyError(f"Degenerate critical points cannot carry a local field: {degenerate}", ids=degenerate)
    first = cps[0].path
    space = constrained_space(first.manifold, bc, first.N)
    h1_gram = hilbert_product_h1(first.manifold, first, bc)
    locals_ = []
    for k, cp in enumerate(cps):
        pencil = hessian(L, cp.path, bc)
        r_in, r_out, lam = calibrate_radius(cp, pencil, L, bc, r0=r0, floor=floor, samples=samples, seed=seed + k)
        op, eigs, vecs = _local_operator(pencil)
        loc = LocalLinearField(cp, op, pencil.G, r_in, r_out, lam, certify_spectral_gap(cp, pencil), eigs, vecs)
        locals_.append(_enforce_cap(loc, h1_gram, cap_bound))
    locals_ = _separate(locals_, space, floor)
    return PseudoGradientField(L, bc, space, locals_, h1_gram, cap_bound)


@dataclass
class FlowResult:
    status: str
    times: List[float]
    actions: List[float]
    grad_norms: List[float]
    distances: List[float]
    nearest_ids: List[Optional[str]]
    states: List[np.ndarray] = field(repr=False)
    base: DiscretePath = field(repr=False)
    terminal_id: Optional[str] = None
    retries: int = 0
    bc: Optional[BoundaryCondition] = field(default=None, repr=False)

    @property
    def final_path(self) -> DiscretePath:
        return self.path_at(-1)

    def path_at(self, k:int) -> DiscretePath:
        space = constrained_space(self.base.manifold, self.bc, self.base.N)
        return self.base.displaced(space.extend(self.states[k]))

    def tail(self, count:int=10) -> List[DiscretePath]:
        n = len(self.states)
        return [self.path_at(k) for k in range(max(0, n - count), n)]

    def contracting(self, window:int=5) -> bool:
        """ gradient norm strictly decreasing over the last samples """
        g = self.grad_norms[-window:]
        return all(b < a for a, b in zip(g[:-1], g[1:]))

    def to_csv(self, filename:str) -> None:
        ids = [i or "" for i in self.nearest_ids]
        with open(filename, "w") as f:
            f.write("t,action,grad_norm,distance,nearest\n")
            for row in zip(self.times, self.actions, self.grad_norms, self.distances, ids):
                f.write(f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g},{row[4]}\n")

def _nearest_critical(path:DiscretePath, cps:Sequence[CriticalPoint], space:ConstrainedSpace,
                      h1_gram:np.ndarray) -> List[Tuple[float, str]]:
    out = []
    for cp in cps:
        d, leak = space.difference(path, cp.path)
        if leak > LEAK_TOL:
            continue
        out.append((float(np.sqrt(max(d @ h1_gram @ d, 0.0))), cp.id))
    return sorted(out)


def flow(vector_field:PseudoGradientField, start:DiscretePath, t_max:float=500.0, stop_tol:float=1e-8,
         rtol:float=1e-9, atol:float=1e-12, cps:Optional[Sequence[CriticalPoint]]=None,
         identify_tol:float=1e-4, ambiguity_tol:float=1e-3) -> FlowResult:
    """Integrate d/dt gamma = X(gamma) with adaptive RK45 from start.

    Stops when the H^1 norm of the gradient drops to stop_tol (converged), or at
    t_max (timeout). An action increase above 1e-10 on a step is retried once
    with tighter tolerances, then raises FlowError, as does step underflow.
    """
    X = vector_field
    L, bc, space = X.L, X.bc, X.space
    if endpoint_residual(start.manifold, bc, start.nodes[0], start.nodes[-1]) > 1e-9:
        raise BoundaryConditionError("Flow start does not satisfy the boundary condition")
    cps = list(cps) if cps is not None else [loc.center for loc in X.locals]

    def path_of(c):
        return start.displaced(space.extend(c))

    def rhs(t, c):
        return X(path_of(c))

    def measure(c):
        path = path_of(c)
        near = _nearest_critical(path, cps, space, X.h1_gram)
        dist, ident = near[0] if near else (np.inf, None)
        return action(L, path), X.gradient_norm(gradient(L, path, bc)), dist, ident

    y = np.zeros(space.dim)
    a, gn, dist, ident = measure(y)
    result = FlowResult("running", [0.0], [a], [gn], [dist], [ident], [y.copy()], start, bc=bc)
    solver = RK45(rhs, 0.0, y, t_max, rtol=rtol, atol=atol)
    cur_rtol, cur_atol = rtol, atol
    retrying = False
    while True:
        if gn <= stop_tol:
            result.status = "converged"
            break
        if solver.status == "finished":
            result.status = "timeout"
            logger.warning(f"Flow reached t_max = {t_max} with gradient norm {gn:.3e}")
            break
        t_prev, y_prev = solver.t, solver.y.copy()
        solver.step()
        if solver.status == "failed":
            raise FlowError(f"Step underflow at t = {t_prev:.6g}")
        a_new, gn_new, dist, ident = measure(solver.y)
        if a_new > a + ACTION_SLACK:
            if retrying:
                raise FlowError(f"Action increased by {a_new - a:.3e} at t = {solver.t:.6g} after a tolerance retry")
            cur_rtol, cur_atol = cur_rtol * 1e-2, cur_atol * 1e-2
            logger.warning(f"Action increased by {a_new - a:.3e} at t = {solver.t:.6g}, "
                           f"retrying with rtol {cur_rtol:.1e}")
            solver = RK45(rhs, t_prev, y_prev, t_max, rtol=cur_rtol, atol=cur_atol)
            result.retries += 1
            retrying = True
            continue
        retrying = False
        a, gn = a_new, gn_new
        result.times.append(float(solver.t))
        result.actions.append(a)
        result.grad_norms.append(gn)
        result.distances.append(dist)
        result.nearest_ids.append(ident)
        result.states.append(solver.y.copy())

    if result.status == "converged":
        near = _nearest_critical(result.final_path, cps, space, X.h1_gram)
        close = [n for n in near if n[0] <= ambiguity_tol]
        if len(close) > 1:
            raise AmbiguousTerminal(f"Trajectory ends near several critical points: {[c[1] for c in close]}")
        if near and near[0][0] <= identify_tol:
            result.terminal_id = near[0][1]
    logger.debug(f"Flow {result.status} at t = {result.times[-1]:.4g} after {len(result.times) - 1} steps, "
                 f"terminal {result.terminal_id}")
    return result


def lyapunov_report(vector_field:PseudoGradientField, n_samples:int=1000, seed:int=0, region:str="global",
                    far_radius:float=2.0, sublevel:Optional[float]=None) -> Dict[str, Any]:
    """Sample paths and measure the Lyapunov behaviour of the field.

    region "annulus" draws r_in <= |d|_0 <= r_out around each center, "interior"
    draws |d|_0 <= r_in, "global" mixes balls with far-field displacements up to
    far_radius. Reports the sampled nu = min -DS[X]/|grad|^2, the largest DS[X]
    and the largest H^1 norm of X. Paths with action above sublevel are skipped.
    """
    X = vector_field
    rng = np.random.default_rng(seed)
    if region not in ("global", "annulus", "interior"):
        raise ValueError(f"Error: unknown region {region}, use one of: global, annulus, interior")
    min_nu = np.inf
    max_ds = -np.inf
    max_norm = 0.0
    violations = 0
    nu_violations = 0
    used = 0
    per_center = max(1, n_samples // max(1, len(X.locals)))
    for loc in X.locals:
        if region == "annulus":
            ds_ = sample_displacements(loc.eigenvectors, rng, per_center, loc.radius_r_in, loc.radius_r_out)
        elif region == "interior":
            ds_ = sample_displacements(loc.eigenvectors, rng, per_center, 0.0, loc.radius_r_in)
        else:
            near = sample_displacements(loc.eigenvectors, rng, per_center // 2, 0.0, 1.5 * loc.radius_r_out)
            far = sample_displacements(loc.eigenvectors, rng, per_center - per_center // 2,
                                       1.5 * loc.radius_r_out, far_radius)
            ds_ = np.vstack([near, far])
        required_nu = min(0.5, loc.mu)
        for d in ds_:
            path = loc.center.path.displaced(X.space.extend(d))
            try:
                if sublevel is not None and action(X.L, path) >= sublevel:
                    continue
                g = gradient(X.L, path, X.bc)
            except MorseActionError:
                continue
            grad_sq = X.gradient_norm(g) ** 2
            if grad_sq <= 1e-24:
                continue
            x = X(path)
            ds = float(g @ x)
            used += 1
            max_ds = max(max_ds, ds)
            max_norm = max(max_norm, X.h1_norm(x))
            min_nu = min(min_nu, -ds / grad_sq)
            if ds >= 0.0:
                violations += 1
            if region == "annulus" and ds > -required_nu * grad_sq:
                nu_violations += 1
    report = {
        "region": region,
        "samples": used,
        "sampled_nu": float(min_nu) if used else None,
        "max_dS": float(max_ds) if used else None,
        "max_field_norm": float(max_norm),
        "cap_bound": X.cap_bound,
        "lyapunov_violations": violations,
        "passed": violations == 0 and max_norm <= X.cap_bound,
    }
    if region == "annulus":
        report["nu_violations"] = nu_violations
        report["passed"] = report["passed"] and nu_violations == 0
    return report
