"""Morse complex on a sublevel of the discrete action and its integral homology.

Generators are the nondegenerate critical points below the sublevel, graded by
Morse index and oriented by their unstable basis. Boundary coefficients count
flow lines of the pseudo-gradient field between generators of adjacent index.
"""

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .critical import CriticalPoint, certify_L0, ps_diagnostic
from .errors import BoundaryCompositionError, DegeneracyError, FlowError, LeakedSublevel
from .manifold import check_ps_admissible
from .pathspace import action, gradient, hessian
from .pseudograd import (
    FlowResult,
    PseudoGradientField,
    flow,
    lyapunov_report,
    sample_displacements,
    unstable_basis,
)
from .smith import matmul, rank_mod2, smith_normal_form

logger = logging.getLogger("MorseAction.morse_complex")

INTEGER = "integer"
MOD2 = "mod2_exploratory"


@dataclass
class MorseComplexData:
    sublevel_a: float
    generators: Dict[int, List[str]]
    boundary: Dict[int, List[List[int]]]
    connection_log: List[Dict[str, Any]] = field(default_factory=list)
    mode: str = INTEGER

    @property
    def top_degree(self) -> int:
        return max(self.generators) if self.generators else -1

    def count(self, k:int) -> int:
        return len(self.generators.get(k, []))

    def to_record(self) -> Dict[str, Any]:
        return {
            "sublevel": self.sublevel_a,
            "mode": self.mode,
            "generators": {str(k): v for k, v in sorted(self.generators.items())},
            "boundary": {str(k): v for k, v in sorted(self.boundary.items())},
            "connections": self.connection_log,
        }

    @classmethod
    def from_record(cls, record:Dict[str, Any]) -> "MorseComplexData":
        return cls(
            sublevel_a=float(record["sublevel"]),
            generators={int(k): list(v) for k, v in record["generators"].items()},
            boundary={int(k): [list(map(int, row)) for row in v] for k, v in record["boundary"].items()},
            connection_log=list(record.get("connections", [])),
            mode=record.get("mode", INTEGER),
        )


@dataclass
class HomologyResult:
    betti: Dict[int, int]
    torsion: Dict[int, List[int]]
    coefficients: str = "Z"

    def to_record(self) -> Dict[str, Any]:
        return {
            "coefficients": self.coefficients,
            "betti": [self.betti[k] for k in sorted(self.betti)],
            "torsion": {str(k): v for k, v in sorted(self.torsion.items())},
        }


def collect_generators(cps:Sequence[CriticalPoint], a:float) -> Dict[int, List[CriticalPoint]]:
    """ critical points below the sublevel, grouped by Morse index and ordered by id """
    below = [cp for cp in cps if cp.action_value < a]
    degenerate = [cp.id for cp in below if not certify_L0(cp)]
    if degenerate:
        raise DegeneracyError(
            f"Nondegeneracy fails below the sublevel {a}: points {degenerate} have nontrivial kernel", ids=degenerate)
    graded: Dict[int, List[CriticalPoint]] = {}
    for cp in sorted(below, key=lambda c: c.id):
        graded.setdefault(cp.morse_index, []).append(cp)
    return graded


def _local_for(vector_field:PseudoGradientField, cp:CriticalPoint):
    for loc in vector_field.locals:
        if loc.center.id == cp.id:
            return loc
    raise ValueError(f"Error: no local field is centered at {cp.id}")


@dataclass(frozen=True)
class ConnectionOptions:
    t_max: float = 500.0
    stop_tol: float = 1e-8
    rtol: float = 1e-9
    atol: float = 1e-12
    identify_tol: float = 1e-4
    ambiguity_tol: float = 1e-3
    perturbation_seed: Optional[int] = 0
    perturbation_eps: float = 1e-6
    perturbation_retries: int = 3
    sphere_samples: int = 64
    workers: int = 1


@dataclass
class ConnectionCount:
    counts: Dict[str, int]
    log: List[Dict[str, Any]]
    mode: str
    trajectories: List[FlowResult] = field(default_factory=list, repr=False)


def _branch_flow(vector_field:PseudoGradientField, x:CriticalPoint, direction:np.ndarray, delta:float,
                 cps:Sequence[CriticalPoint], options:ConnectionOptions, branch_seed:int) -> Tuple[FlowResult, int]:
    """Flow from x + delta * direction. A line that stops at a point of index >= 1
    is restarted from a seeded random perturbation of its start."""
    loc = _local_for(vector_field, x)
    space = vector_field.space
    by_id = {cp.id: cp for cp in cps}
    rng = np.random.default_rng(None if options.perturbation_seed is None
                                else [options.perturbation_seed, branch_seed])
    eps = options.perturbation_eps
    for attempt in range(options.perturbation_retries + 1):
        d = delta * direction
        if options.perturbation_seed is not None:
            d = d + sample_displacements(loc.eigenvectors, rng, 1, 0.0, eps * delta)[0]
        start = x.path.displaced(space.extend(d))
        result = flow(vector_field, start, t_max=options.t_max, stop_tol=options.stop_tol, rtol=options.rtol,
                      atol=options.atol, cps=cps, identify_tol=options.identify_tol,
                      ambiguity_tol=options.ambiguity_tol)
        if result.status != "converged":
            symptoms = ps_diagnostic(vector_field.L, vector_field.bc, result.tail(), grad_tol=options.stop_tol)
            raise FlowError(f"Trajectory from {x.id} timed out at t = {result.times[-1]:.4g} "
                            f"(escape: {symptoms['escape']}, Palais-Smale symptom: {symptoms['ps_violation_symptom']})")
        if result.terminal_id is None:
            raise LeakedSublevel(f"Trajectory from {x.id} converged to a point outside the critical set "
                                 f"(action {result.actions[-1]:.8g})")
        y = by_id[result.terminal_id]
        if y.morse_index == 0 or options.perturbation_seed is None or attempt == options.perturbation_retries:
            return result, attempt
        logger.warning(f"Trajectory from {x.id} stopped at {y.id} of index {y.morse_index}, "
                       f"perturbing the start (attempt {attempt + 1})")
        eps *= 10.0
    return result, options.perturbation_retries


def count_connections(x:CriticalPoint, vector_field:PseudoGradientField, generators:Dict[int, List[CriticalPoint]],
                      options:ConnectionOptions=ConnectionOptions(),
                      all_cps:Optional[Sequence[CriticalPoint]]=None) -> ConnectionCount:
    """Signed counts n(x, y) for generators y of index ind(x) - 1.

    Index 1: the branches x +- delta e, delta = r_in/2, contribute +1 and -1 to
    the index-0 point they reach. Index 2: the unstable circle is sampled and
    each change of terminal minimum between neighbouring samples is attributed
    to the index-1 point its bisected trajectory passes closest to; counts are
    reduced mod 2 and the mode is "mod2_exploratory".
    A branch that stops at a point of index >= 1 is restarted from a seeded
    random perturbation of its start.
    """
    k = x.morse_index
    if k == 0:
        return ConnectionCount({}, [], INTEGER, [])
    L, bc = vector_field.L, vector_field.bc
    cps = list(all_cps) if all_cps is not None else [cp for group in generators.values() for cp in group]
    targets = {cp.id for cp in generators.get(k - 1, [])}
    pencil = hessian(L, x.path, bc)
    basis = unstable_basis(x, pencil)
    delta = 0.5 * _local_for(vector_field, x).radius_r_in
    counts: Dict[str, int] = {}
    log: List[Dict[str, Any]] = []
    trajectories: List[FlowResult] = []

    if k == 1:
        e = basis[:, 0]
        jobs = [(+1, e, 0), (-1, -e, 1)]

        def run(job):
            sign, direction, seed = job
            return sign, _branch_flow(vector_field, x, direction, delta, cps, options, seed)

        if options.workers > 1:
            with ThreadPoolExecutor(max_workers=min(2, options.workers)) as pool:
                outcomes = list(pool.map(run, jobs))
        else:
            outcomes = [run(job) for job in jobs]
        for sign, (result, retries) in outcomes:
            y = result.terminal_id
            entry = {"x": x.id, "y": y, "sign": sign, "branch": "+" if sign > 0 else "-",
                     "steps": len(result.times) - 1, "t_end": result.times[-1], "retries": retries,
                     "contracting": result.contracting(), "trajectory": None}
            log.append(entry)
            trajectories.append(result)
            if y not in targets:
                logger.warning(f"Branch {entry['branch']} of {x.id} ends at {y}, which has index "
                               f"{next(cp.morse_index for cp in cps if cp.id == y)}")
                continue
            counts[y] = counts.get(y, 0) + sign
        return ConnectionCount(counts, log, INTEGER, trajectories)

    if k == 2:
        return _count_index_two(x, vector_field, basis, delta, cps, generators, options)
    raise ValueError(f"Error: connection counting supports index 1 and 2, got index {k}")


def _count_index_two(x, vector_field, basis, delta, cps, generators, options):
    e1, e2 = basis[:, 0], basis[:, 1]
    saddles = {cp.id for cp in generators.get(1, [])}
    by_id = {cp.id: cp for cp in cps}

    def terminal(theta):
        direction = np.cos(theta) * e1 + np.sin(theta) * e2
        result, _ = _branch_flow(vector_field, x, direction, delta, cps, replace(options, perturbation_seed=None), 0)
        return result

    m = options.sphere_samples
    thetas = 2.0 * np.pi * np.arange(m) / m
    ends = [terminal(th).terminal_id for th in thetas]
    counts: Dict[str, int] = {}
    log = []
    trajectories = []
    for i in range(m):
        a, b = thetas[i], thetas[i] + 2.0 * np.pi / m
        ya, yb = ends[i], ends[(i + 1) % m]
        if ya == yb:
            continue
        for _ in range(10):
            mid = 0.5 * (a + b)
            ym = terminal(mid).terminal_id
            if ym == ya:
                a = mid
            else:
                b = mid
        result = terminal(0.5 * (a + b))
        passing = [(dist, ident) for dist, ident in zip(result.distances, result.nearest_ids) if ident in saddles]
        if not passing:
            logger.warning(f"No index-1 point found between directions {a:.4f} and {b:.4f} from {x.id}")
            continue
        y = min(passing)[1]
        counts[y] = (counts.get(y, 0) + 1) % 2
        log.append({"x": x.id, "y": y, "sign": 1, "branch": f"theta={0.5 * (a + b):.6f}",
                    "steps": len(result.times) - 1, "t_end": result.times[-1], "retries": 0,
                    "contracting": by_id[y].morse_index == 1, "trajectory": None})
        trajectories.append(result)
    return ConnectionCount(counts, log, MOD2, trajectories)


def boundary_matrices(generators:Dict[int, List[str]], counts:Dict[str, Dict[str, int]], sublevel:float,
                      connection_log:Optional[List[Dict[str, Any]]]=None, mode:str=INTEGER) -> MorseComplexData:
    """Assemble d_k : C_k -> C_{k-1} with d_k[j][i] = n(x_i, y_j) and check d_{k-1} d_k = 0 exactly."""
    top = max(generators) if generators else -1
    boundary: Dict[int, List[List[int]]] = {}
    for k in range(1, top + 1):
        rows = generators.get(k - 1, [])
        cols = generators.get(k, [])
        boundary[k] = [[int(counts.get(x, {}).get(y, 0)) for x in cols] for y in rows]
    data = MorseComplexData(sublevel, {k: list(v) for k, v in generators.items()}, boundary,
                            list(connection_log or []), mode)
    check_boundary_squared(data)
    return data


def check_boundary_squared(data:MorseComplexData) -> None:
    for k in range(2, data.top_degree + 1):
        lower, upper = data.boundary[k - 1], data.boundary[k]
        if not lower or not upper or not upper[0]:
            continue
        composition = matmul(lower, upper, len(upper))
        if data.mode == MOD2:
            composition = [[x % 2 for x in row] for row in composition]
        if any(x for row in composition for x in row):
            raise BoundaryCompositionError(f"d_{k - 1} d_{k} is not zero: {composition}", degree=k,
                                           composition=composition)


def flip_orientation(data:MorseComplexData, generator_id:str) -> MorseComplexData:
    """ reverse the orientation of one generator: negate its column in d_k and its row in d_(k+1) """
    boundary = {k: [row[:] for row in mat] for k, mat in data.boundary.items()}
    for k, ids in data.generators.items():
        if generator_id not in ids:
            continue
        i = ids.index(generator_id)
        if k in boundary:
            for row in boundary[k]:
                row[i] = -row[i]
        if k + 1 in boundary:
            boundary[k + 1][i] = [-x for x in boundary[k + 1][i]]
    return MorseComplexData(data.sublevel_a, data.generators, boundary, data.connection_log, data.mode)


def homology(data:MorseComplexData) -> HomologyResult:
    """ betti_k = #C_k - rank d_k - rank d_(k+1), torsion from the Smith form of d_(k+1) """
    betti: Dict[int, int] = {}
    torsion: Dict[int, List[int]] = {}
    top = data.top_degree
    ranks: Dict[int, int] = {}
    forms = {}
    for k, mat in data.boundary.items():
        shape = (data.count(k - 1), data.count(k))
        if data.mode == MOD2:
            ranks[k] = rank_mod2(mat) if shape[0] and shape[1] else 0
        else:
            forms[k] = smith_normal_form(mat, shape)
            ranks[k] = forms[k].rank
    for k in range(top + 1):
        betti[k] = data.count(k) - ranks.get(k, 0) - ranks.get(k + 1, 0)
        torsion[k] = list(forms[k + 1].torsion) if k + 1 in forms else []
    return HomologyResult(betti, torsion, "Z/2" if data.mode == MOD2 else "Z")


def _reference_table(reference:str) -> Tuple[Dict[int, int], str]:
    match = re.fullmatch(r"\s*([a-zA-Z0-9_]+)\s*(?:[:(]\s*([-+0-9.eE]+)\s*\)?)?\s*", reference)
    if not match:
        raise ValueError(f"Error: cannot parse reference {reference}")
    name, arg = match.group(1), match.group(2)
    if name == "contractible":
        return {0: 1}, name
    if name == "circle_component":
        return {0: 1, 1: 1}, name
    if name == "based_loops_S1_sublevel":
        a = float(arg) if arg is not None else 1.0
        bound = int(math.ceil(math.sqrt(max(2.0 * a, 0.0)))) + 1
        count = sum(1 for k in range(-bound, bound + 1) if 0.5 * k * k < a)
        return ({0: count} if count else {}), f"{name}({a:g})"
    if name == "torus_free_component":
        n = int(float(arg)) if arg is not None else 2
        return {k: math.comb(n, k) for k in range(n + 1)}, f"{name}({n})"
    raise ValueError(
        f"Error: unknown reference {name}, use one of: contractible, circle_component, "
        "based_loops_S1_sublevel(a), torus_free_component(n)")


def compare_reference(result:HomologyResult, reference:str,
                      generator_counts:Optional[Dict[int, int]]=None) -> Dict[str, Any]:
    """Compare computed homology with the built-in table and check
    #generators_k >= betti_k in every degree."""
    expected, label = _reference_table(reference)
    degrees = sorted(set(expected) | set(result.betti))
    expected_betti = [expected.get(k, 0) for k in degrees]
    observed_betti = [result.betti.get(k, 0) for k in degrees]
    observed_torsion = {str(k): result.torsion.get(k, []) for k in degrees if result.torsion.get(k)}
    match = expected_betti == observed_betti and not observed_torsion
    inequality = {}
    if generator_counts is not None:
        for k in degrees:
            inequality[str(k)] = {
                "generators": generator_counts.get(k, 0),
                "betti": result.betti.get(k, 0),
                "holds": generator_counts.get(k, 0) >= result.betti.get(k, 0),
            }
    report = {
        "reference": label,
        "degrees": degrees,
        "expected": {"betti": expected_betti, "torsion": {}},
        "observed": {"betti": observed_betti, "torsion": observed_torsion},
        "match": match,
        "generator_inequality": inequality,
        "passed": match and all(v["holds"] for v in inequality.values()),
    }
    if not report["passed"]:
        logger.warning(f"Homology does not match {label}: expected {expected_betti}, observed {observed_betti}")
    return report


def conditions_report(vector_field:PseudoGradientField, cps:Sequence[CriticalPoint],
                      data:Optional[MorseComplexData]=None, n_samples:int=200, seed:int=0,
                      sublevel:Optional[float]=None) -> Dict[str, Any]:
    """Hypotheses the complex rests on, each checked or sampled.

    With a sublevel, samples with action below it also bound the H^1 norm of the
    gradient there.
    """
    L, bc = vector_field.L, vector_field.bc
    m = vector_field.space.manifold
    admissible, ps = check_ps_admissible(m, bc)
    lyap = lyapunov_report(vector_field, n_samples=n_samples, seed=seed)
    rng = np.random.default_rng(seed)
    lowest = np.inf
    max_grad, below = 0.0, 0
    for loc in vector_field.locals:
        for d in sample_displacements(loc.eigenvectors, rng, max(1, n_samples // max(1, len(vector_field.locals))),
                                      0.0, 2.0):
            path = loc.center.path.displaced(vector_field.space.extend(d))
            value = action(L, path)
            lowest = min(lowest, value)
            if sublevel is not None and value < sublevel:
                below += 1
                max_grad = max(max_grad, vector_field.gradient_norm(gradient(L, path, bc)))
    floor = -L.c if L.c is not None else None
    report = {
        "morse": {"passed": all(certify_L0(cp) for cp in cps), "centers": [cp.id for cp in cps]},
        "bounded_below": {"sampled_min_action": float(lowest), "declared_floor": floor,
                          "passed": None if floor is None else bool(lowest >= floor - 1e-9)},
        "palais_smale": {"passed": admissible, **ps},
        "complete": {"cap_bound": vector_field.cap_bound, "max_field_norm": lyap["max_field_norm"],
                     "passed": lyap["max_field_norm"] <= vector_field.cap_bound},
        "lyapunov": lyap,
    }
    if sublevel is not None:
        report["bounded_gradient"] = {"sublevel": sublevel, "samples": below,
                                      "sampled_max_gradient_norm": max_grad,
                                      "passed": bool(np.isfinite(max_grad))}
    if data is not None:
        branches = [e for e in data.connection_log if e.get("sign") is not None]
        report["morse_smale"] = {
            "mode": data.mode,
            "branches": len(branches),
            "passed": all(e.get("contracting", False) for e in branches),
        }
    return report
