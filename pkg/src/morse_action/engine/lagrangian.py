"""Lagrangian functions with their first and second derivatives.

Every callback is vectorized over a batch of M sample points:
t has shape (M,), q and v have shape (M, n). Shapes returned:

    eval  -> (M,)
    d_q   -> (M, n)        dL/dq
    d_v   -> (M, n)        dL/dv
    d_vv  -> (M, n, n)     d2L/dv2
    d_vq  -> (M, n, n)     [i, j] = d2L/dv_i dq_j
    d_qq  -> (M, n, n)     d2L/dq2
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from .errors import LagrangianError, LegendreStagnation

logger = logging.getLogger("MorseAction.lagrangian")

Callback = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

FAMILIES = ("electromagnetic", "polynomial_velocity", "custom")

# sampled margins above -MARGIN_TOL count as satisfied
MARGIN_TOL = 1e-12


@dataclass(frozen=True)
class LagrangianModel:
    dim: int
    eval: Callback
    d_q: Callback
    d_v: Callback
    d_vv: Callback
    d_vq: Callback
    d_qq: Callback
    family: str = "custom"
    ell0: Optional[float] = None
    c: Optional[float] = None
    ell1: Optional[float] = None
    ell2: Optional[float] = None
    ell3: Optional[float] = None
    ell4: Optional[float] = None
    reduced_accuracy: bool = False
    name: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise LagrangianError(f"Unknown family tag {self.family}, use one of: {', '.join(FAMILIES)}")

    def with_constants(self, **constants) -> "LagrangianModel":
        return replace(self, **constants)

    def point(self, what:str, t:float, q, v) -> np.ndarray:
        """ evaluate one callback at a single (t, q, v) """
        tt, qq, vv = as_batch(t, q, v, self.dim)
        return getattr(self, what)(tt, qq, vv)[0]


@dataclass(frozen=True)
class ElectromagneticData:
    """L(t,q,v) = 1/2 <A(t,q)v, v> + <alpha(t,q), v> - V(t,q).

    Derivative callbacks left as None stand for identically zero derivatives;
    a missing kinetic tensor is the identity.
    kinetic_dq[m, i, j, k] = dA_ij/dq_k, magnetic_dq[m, i, k] = dalpha_i/dq_k,
    second derivatives append one more q index.
    """

    dim: int
    kinetic: Optional[Callable] = None
    magnetic: Optional[Callable] = None
    potential: Optional[Callable] = None
    kinetic_dq: Optional[Callable] = None
    kinetic_dqq: Optional[Callable] = None
    magnetic_dq: Optional[Callable] = None
    magnetic_dqq: Optional[Callable] = None
    potential_dq: Optional[Callable] = None
    potential_dqq: Optional[Callable] = None
    constants: Dict[str, float] = field(default_factory=dict)


def as_batch(t, q, v, n:int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float).reshape(-1, n)
    v = np.asarray(v, dtype=float).reshape(-1, n)
    t = np.broadcast_to(np.asarray(t, dtype=float).ravel(), (q.shape[0],)).copy()
    return t, q, v


def assemble_electromagnetic(data:ElectromagneticData, name:str="", check_samples:int=32) -> LagrangianModel:
    """ build a LagrangianModel whose derivatives are derived analytically from A, alpha, V """
    n = data.dim
    eye = np.eye(n)

    def A(t, q):
        if data.kinetic is None:
            return np.broadcast_to(eye, (q.shape[0], n, n))
        return np.asarray(data.kinetic(t, q), dtype=float).reshape(q.shape[0], n, n)

    def zeros(shape):
        return lambda t, q: np.zeros((q.shape[0],) + shape)

    alpha = data.magnetic or zeros((n,))
    V = data.potential or (lambda t, q: np.zeros(q.shape[0]))
    A_q = data.kinetic_dq or zeros((n, n, n))
    A_qq = data.kinetic_dqq or zeros((n, n, n, n))
    a_q = data.magnetic_dq or zeros((n, n))
    a_qq = data.magnetic_dqq or zeros((n, n, n))
    V_q = data.potential_dq or zeros((n,))
    V_qq = data.potential_dqq or zeros((n, n))

    rng = np.random.default_rng(0)
    ts = rng.uniform(0.0, 1.0, size=check_samples)
    qs = rng.uniform(-2.0, 2.0, size=(check_samples, n))
    kin = A(ts, qs)
    if np.max(np.abs(kin - np.swapaxes(kin, 1, 2))) > 1e-12:
        raise LagrangianError("Kinetic tensor A(t,q) is not symmetric at sampled points")
    if np.min(np.linalg.eigvalsh(kin)) <= 0.0:
        raise LagrangianError("Kinetic tensor A(t,q) is not positive definite at sampled points")

    def ev(t, q, v):
        return 0.5 * np.einsum("mij,mi,mj->m", A(t, q), v, v) + np.einsum("mi,mi->m", alpha(t, q), v) - V(t, q)

    def d_v(t, q, v):
        return np.einsum("mij,mj->mi", A(t, q), v) + alpha(t, q)

    def d_q(t, q, v):
        return (0.5 * np.einsum("mijk,mi,mj->mk", A_q(t, q), v, v)
                + np.einsum("mik,mi->mk", a_q(t, q), v) - V_q(t, q))

    def d_vv(t, q, v):
        return np.array(A(t, q), dtype=float)

    def d_vq(t, q, v):
        return np.einsum("milj,ml->mij", A_q(t, q), v) + a_q(t, q)

    def d_qq(t, q, v):
        return (0.5 * np.einsum("mijkl,mi,mj->mkl", A_qq(t, q), v, v)
                + np.einsum("mikl,mi->mkl", a_qq(t, q), v) - V_qq(t, q))

    return LagrangianModel(
        dim=n, eval=ev, d_q=d_q, d_v=d_v, d_vv=d_vv, d_vq=d_vq, d_qq=d_qq,
        family="electromagnetic", name=name, **data.constants)


def finite_difference_model(fn:Callback, dim:int, step:float=1e-4, name:str="custom") -> LagrangianModel:
    """Complete a bare Lagrangian by central differences. The result is flagged
    reduced_accuracy: second derivatives carry O(step^2) truncation error."""
    n = dim

    def partial(f, arg, t, q, v):
        cols = []
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            if arg == "q":
                cols.append((f(t, q + e, v) - f(t, q - e, v)) / (2.0 * step))
            else:
                cols.append((f(t, q, v + e) - f(t, q, v - e)) / (2.0 * step))
        return np.stack(cols, axis=-1)

    def d_q(t, q, v):
        return partial(fn, "q", t, q, v)

    def d_v(t, q, v):
        return partial(fn, "v", t, q, v)

    def d_vv(t, q, v):
        h = partial(d_v, "v", t, q, v)
        return 0.5 * (h + np.swapaxes(h, 1, 2))

    def d_vq(t, q, v):
        return partial(d_v, "q", t, q, v)

    def d_qq(t, q, v):
        h = partial(d_q, "q", t, q, v)
        return 0.5 * (h + np.swapaxes(h, 1, 2))

    logger.warning(f"Lagrangian {name} uses finite-difference derivatives (reduced accuracy)")
    return LagrangianModel(dim=n, eval=fn, d_q=d_q, d_v=d_v, d_vv=d_vv, d_vq=d_vq, d_qq=d_qq,
                           family="custom", reduced_accuracy=True, name=name)


def check_derivatives(L:LagrangianModel, n_samples:int=100, seed:int=0, step:float=1e-5,
                      q_scale:float=1.0, v_scale:float=1.0) -> Dict[str, float]:
    """ worst relative error of every analytic derivative against central differences """
    n = L.dim
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, 1.0, size=n_samples)
    q = rng.uniform(-q_scale, q_scale, size=(n_samples, n))
    v = rng.uniform(-v_scale, v_scale, size=(n_samples, n))

    def fd(f, arg):
        cols = []
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            if arg == "q":
                cols.append((f(t, q + e, v) - f(t, q - e, v)) / (2.0 * step))
            else:
                cols.append((f(t, q, v + e) - f(t, q, v - e)) / (2.0 * step))
        return np.stack(cols, axis=-1)

    def rel(analytic, approx):
        scale = max(1.0, float(np.max(np.abs(approx))))
        return float(np.max(np.abs(analytic - approx))) / scale

    return {
        "d_q": rel(L.d_q(t, q, v), fd(L.eval, "q")),
        "d_v": rel(L.d_v(t, q, v), fd(L.eval, "v")),
        "d_vv": rel(L.d_vv(t, q, v), fd(L.d_v, "v")),
        "d_vq": rel(L.d_vq(t, q, v), fd(L.d_v, "q")),
        "d_qq": rel(L.d_qq(t, q, v), fd(L.d_q, "q")),
    }


@dataclass(frozen=True)
class SampleBox:
    q_low: Tuple[float, ...]
    q_high: Tuple[float, ...]
    v_max: float

    @classmethod
    def cube(cls, n:int, q_half_width:float, v_max:float) -> "SampleBox":
        return cls((-q_half_width,) * n, (q_half_width,) * n, v_max)


def _margin_entry(margins:np.ndarray, declared:Optional[float], estimated:float) -> Dict[str, Any]:
    if declared is None:
        return {"declared": None, "estimated": estimated, "worst_margin": None, "passed": None}
    worst = float(np.min(margins))
    return {"declared": declared, "estimated": estimated, "worst_margin": worst, "passed": worst >= -MARGIN_TOL}


def check_growth_conditions(L:LagrangianModel, sample_box:SampleBox, n_samples:int=2000, seed:int=0,
                            metric:Optional[np.ndarray]=None) -> Dict[str, Any]:
    """Sample the growth and convexity conditions against the declared constants.

    Reports the worst sampled margin of the three (L1') bounds, (L2'), the lower
    kinetic bound L >= ell0 g(v,v) - c and the fiber-integrated bounds on dL/dv,
    dL/dq and L. Nothing is proven: a passing entry only means no sampled point
    violated the bound. Undeclared constants are estimated and reported with
    passed = None.
    """
    n = L.dim
    if n_samples < 1:
        raise ValueError("Error: n_samples must be positive")
    rng = np.random.default_rng(seed)
    lo = np.asarray(sample_box.q_low, dtype=float)
    hi = np.asarray(sample_box.q_high, dtype=float)
    t = rng.uniform(0.0, 1.0, size=n_samples)
    q = rng.uniform(lo, hi, size=(n_samples, n))
    v = rng.uniform(-sample_box.v_max, sample_box.v_max, size=(n_samples, n))
    # include the corners of the box, where growth violations live
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)])).reshape(n, -1).T
    vc = np.array(np.meshgrid(*[[-sample_box.v_max, 0.0, sample_box.v_max]] * n)).reshape(n, -1).T
    cq = np.repeat(corners, len(vc), axis=0)
    cv = np.tile(vc, (len(corners), 1))
    t = np.concatenate([t, np.full(len(cq), 0.5)])
    q = np.concatenate([q, cq])
    v = np.concatenate([v, cv])

    g = np.eye(n) if metric is None else np.asarray(metric, dtype=float)
    speed = np.linalg.norm(v, axis=1)
    gvv = np.einsum("ij,mi,mj->m", g, v, v)
    val = L.eval(t, q, v)
    dv = L.d_v(t, q, v)
    dq = L.d_q(t, q, v)
    vv = L.d_vv(t, q, v)
    vq = L.d_vq(t, q, v)
    qq = L.d_qq(t, q, v)

    norm_vv = np.linalg.norm(vv, ord=2, axis=(1, 2))
    norm_vq = np.linalg.norm(vq, ord=2, axis=(1, 2))
    norm_qq = np.linalg.norm(qq, ord=2, axis=(1, 2))
    min_eig_vv = np.linalg.eigvalsh(0.5 * (vv + np.swapaxes(vv, 1, 2)))[:, 0]

    est_ell1 = float(max(np.max(norm_vv), np.max(norm_vq / (1.0 + speed)), np.max(norm_qq / (1.0 + speed ** 2))))
    est_ell2 = float(np.min(min_eig_vv))
    est_ell3 = float(max(np.max(np.linalg.norm(dv, axis=1) / (1.0 + speed)),
                         np.max(np.linalg.norm(dq, axis=1) / (1.0 + speed ** 2))))
    est_ell4 = float(np.max(val / (1.0 + speed ** 2)))
    ell0 = L.ell0 if L.ell0 is not None else max(est_ell2, 0.0) / 2.0
    est_c = float(np.max(ell0 * gvv - val))

    report = {"samples": int(len(t))}
    ell1 = L.ell1
    report["L1_kinetic"] = _margin_entry(None if ell1 is None else ell1 - norm_vv, ell1, est_ell1)
    report["L1_mixed"] = _margin_entry(None if ell1 is None else ell1 * (1.0 + speed) - norm_vq, ell1, est_ell1)
    report["L1_base"] = _margin_entry(None if ell1 is None else ell1 * (1.0 + speed ** 2) - norm_qq, ell1, est_ell1)
    ell2 = L.ell2
    report["L2_convexity"] = _margin_entry(None if ell2 is None else min_eig_vv - ell2, ell2, est_ell2)
    if L.ell0 is None or L.c is None:
        report["kinetic_lower_bound"] = {"declared": None, "estimated": {"ell0": ell0, "c": est_c},
                                         "worst_margin": None, "passed": None}
    else:
        margins = val - (L.ell0 * gvv - L.c)
        worst_index = int(np.argmin(margins))
        entry = _margin_entry(margins, L.c, est_c)
        entry["declared"] = {"ell0": L.ell0, "c": L.c}
        entry["worst_point"] = {"q": q[worst_index].tolist(), "v": v[worst_index].tolist()}
        report["kinetic_lower_bound"] = entry
    ell3 = L.ell3
    report["growth_dv"] = _margin_entry(
        None if ell3 is None else ell3 * (1.0 + speed) - np.linalg.norm(dv, axis=1), ell3, est_ell3)
    report["growth_dq"] = _margin_entry(
        None if ell3 is None else ell3 * (1.0 + speed ** 2) - np.linalg.norm(dq, axis=1), ell3, est_ell3)
    ell4 = L.ell4
    report["growth_value"] = _margin_entry(None if ell4 is None else ell4 * (1.0 + speed ** 2) - val, ell4, est_ell4)

    declared = [k for k, e in report.items() if isinstance(e, dict) and e.get("passed") is not None]
    report["passed"] = all(report[k]["passed"] for k in declared)
    report["checked"] = declared
    if not report["passed"]:
        failing = [k for k in declared if not report[k]["passed"]]
        logger.info(f"Growth conditions violated on samples: {failing}")
    return report


def legendre_velocity(L:LagrangianModel, t:float, q, p, tol:float=1e-10, max_iter:int=50) -> np.ndarray:
    """Invert the fiber derivative: find v with dL/dv(t,q,v) = p by damped Newton.

    Start is the solution of the problem linearized at v = 0, damping halves the
    step until the residual decreases.
    """
    n = L.dim
    q = np.asarray(q, dtype=float).reshape(n)
    p = np.asarray(p, dtype=float).reshape(n)

    def residual(v):
        return L.point("d_v", t, q, v) - p

    zero = np.zeros(n)
    v = np.linalg.solve(L.point("d_vv", t, q, zero), p - L.point("d_v", t, q, zero))
    r = residual(v)
    rnorm = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if rnorm <= tol:
            return v
        step = np.linalg.solve(L.point("d_vv", t, q, v), r)
        damping = 1.0
        while damping > 2.0 ** -30:
            candidate = v - damping * step
            rc = residual(candidate)
            if np.linalg.norm(rc) < rnorm:
                break
            damping *= 0.5
        else:
            raise LegendreStagnation(f"Legendre inversion stagnated with residual {rnorm:.3e}", residual=rnorm)
        v, r = candidate, rc
        rnorm = float(np.linalg.norm(r))
    if rnorm <= tol:
        return v
    raise LegendreStagnation(
        f"Legendre inversion did not converge in {max_iter} iterations, residual {rnorm:.3e}", residual=rnorm)
