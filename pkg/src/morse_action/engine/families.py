"""Built-in Lagrangian families.

Potentials are sums of terms, each supplying its value, gradient and Hessian
vectorized over a batch of points q of shape (M, n):

    cosine    V = a cos(2 pi <k, q> + phase)
    harmonic  V = c/2 |q|^2
    quartic   V = c/4 |q|^4
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import LagrangianError
from .lagrangian import ElectromagneticData, LagrangianModel, assemble_electromagnetic

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PotentialTerm:
    kind: str
    coefficient: float
    wavevector: Optional[tuple] = None
    phase: float = 0.0

    def value(self, q:np.ndarray) -> np.ndarray:
        if self.kind == "cosine":
            return self.coefficient * np.cos(TWO_PI * q @ np.asarray(self.wavevector) + self.phase)
        r2 = np.einsum("mi,mi->m", q, q)
        if self.kind == "harmonic":
            return 0.5 * self.coefficient * r2
        return 0.25 * self.coefficient * r2 ** 2

    def gradient(self, q:np.ndarray) -> np.ndarray:
        if self.kind == "cosine":
            k = np.asarray(self.wavevector, dtype=float)
            s = np.sin(TWO_PI * q @ k + self.phase)
            return -self.coefficient * TWO_PI * s[:, None] * k[None, :]
        if self.kind == "harmonic":
            return self.coefficient * q
        r2 = np.einsum("mi,mi->m", q, q)
        return self.coefficient * r2[:, None] * q

    def hessian(self, q:np.ndarray) -> np.ndarray:
        n = q.shape[1]
        if self.kind == "cosine":
            k = np.asarray(self.wavevector, dtype=float)
            c = np.cos(TWO_PI * q @ k + self.phase)
            return -self.coefficient * TWO_PI ** 2 * c[:, None, None] * np.outer(k, k)[None, :, :]
        if self.kind == "harmonic":
            return np.broadcast_to(self.coefficient * np.eye(n), (q.shape[0], n, n)).copy()
        r2 = np.einsum("mi,mi->m", q, q)
        return self.coefficient * (r2[:, None, None] * np.eye(n)[None] + 2.0 * np.einsum("mi,mj->mij", q, q))


def potential_callbacks(terms:Sequence[PotentialTerm]) -> Dict[str, Any]:
    if not terms:
        return {}
    terms = list(terms)
    return {
        "potential": lambda t, q: sum(term.value(q) for term in terms),
        "potential_dq": lambda t, q: sum(term.gradient(q) for term in terms),
        "potential_dqq": lambda t, q: sum(term.hessian(q) for term in terms),
    }


def parse_potential(spec:List[Dict[str, Any]], dim:int) -> List[PotentialTerm]:
    terms = []
    for i, entry in enumerate(spec or []):
        kind = entry.get("kind")
        if kind not in ("cosine", "harmonic", "quartic"):
            raise ValueError(f"Error: potential term {i} has unknown kind {kind}, use one of: cosine, harmonic, quartic")
        wavevector = None
        if kind == "cosine":
            wavevector = tuple(float(x) for x in np.atleast_1d(entry.get("wavevector", [1.0] * dim)))
            if len(wavevector) != dim:
                raise ValueError(f"Error: potential term {i} wavevector must have length {dim}")
        coefficient = entry.get("amplitude", entry.get("coefficient"))
        if coefficient is None:
            raise ValueError(f"Error: potential term {i} needs an amplitude or coefficient")
        terms.append(PotentialTerm(kind, float(coefficient), wavevector, float(entry.get("phase", 0.0))))
    return terms


def electromagnetic(dim:int, kinetic=None, magnetic=None, magnetic_field:Optional[float]=None,
                    potential:Sequence[PotentialTerm]=(), constants:Optional[Dict[str, float]]=None,
                    name:str="electromagnetic") -> LagrangianModel:
    """Electromagnetic Lagrangian with constant kinetic tensor, constant or
    uniform-field magnetic potential and a sum of potential terms."""
    callbacks: Dict[str, Any] = {}
    if kinetic is not None:
        A = np.asarray(kinetic, dtype=float).reshape(dim, dim)
        callbacks["kinetic"] = lambda t, q: np.broadcast_to(A, (q.shape[0], dim, dim))
    if magnetic is not None and magnetic_field is not None:
        raise LagrangianError("Give either a constant magnetic potential or a uniform magnetic field, not both")
    if magnetic is not None:
        a = np.asarray(magnetic, dtype=float).reshape(dim)
        callbacks["magnetic"] = lambda t, q: np.broadcast_to(a, q.shape).copy()
    if magnetic_field is not None:
        if dim != 2:
            raise LagrangianError("A uniform magnetic field needs a two-dimensional configuration space")
        half = 0.5 * float(magnetic_field)
        # alpha = B/2 (-q2, q1)
        da = np.array([[0.0, -half], [half, 0.0]])
        callbacks["magnetic"] = lambda t, q: q @ da.T
        callbacks["magnetic_dq"] = lambda t, q: np.broadcast_to(da, (q.shape[0], 2, 2)).copy()
    callbacks.update(potential_callbacks(potential))
    data = ElectromagneticData(dim=dim, constants=dict(constants or {}), **callbacks)
    return assemble_electromagnetic(data, name=name)


def free_particle(dim:int=1, mass:float=1.0) -> LagrangianModel:
    """ L = m/2 |v|^2 """
    return electromagnetic(dim, kinetic=mass * np.eye(dim), name="free_particle",
                           constants={"ell0": 0.5 * mass, "c": 0.0, "ell1": mass, "ell2": mass})


def pendulum(amplitude:float=0.5, dim:int=1) -> LagrangianModel:
    """ L = 1/2 |v|^2 - a cos(2 pi q_1) on the circle """
    k = np.zeros(dim)
    k[0] = 1.0
    term = PotentialTerm("cosine", amplitude, tuple(k))
    ell1 = max(1.0, TWO_PI ** 2 * abs(amplitude))
    return electromagnetic(dim, potential=[term], name="pendulum",
                           constants={"ell0": 0.5, "c": abs(amplitude), "ell1": ell1, "ell2": 1.0})


def duffing(omega:float=1.5 * np.pi, quartic:float=0.25, dim:int=1) -> LagrangianModel:
    """ L = 1/2 |v|^2 - omega^2/2 |q|^2 + quartic |q|^4 """
    terms = [PotentialTerm("harmonic", omega ** 2)]
    if quartic:
        terms.append(PotentialTerm("quartic", -4.0 * quartic))
    constants: Dict[str, float] = {"ell2": 1.0}
    if quartic > 0:
        # quartic s^2 - omega^2/2 s over s = |q|^2 is bounded below by -omega^4/(16 quartic)
        constants.update({"ell0": 0.5, "c": omega ** 4 / (16.0 * quartic)})
    return electromagnetic(dim, potential=terms, name="duffing", constants=constants)


def inverted_oscillator(omega:float=1.5 * np.pi, dim:int=1) -> LagrangianModel:
    """ L = 1/2 |v|^2 - omega^2/2 |q|^2, unbounded below in q """
    model = duffing(omega=omega, quartic=0.0, dim=dim)
    return model.with_constants(name="inverted_oscillator", ell0=0.4, c=0.0)


def quartic_velocity(quartic:float=0.25, mass:float=1.0, dim:int=1,
                     potential:Sequence[PotentialTerm]=()) -> LagrangianModel:
    """L = m/2 |v|^2 + quartic |v|^4 - V(q).

    Not fiber-wise quadratic: its action is twice Gateaux but not Frechet
    differentiable on H^1, and d2L/dv2 grows without bound.
    """
    n = dim
    pot = potential_callbacks(potential)
    V = pot.get("potential", lambda t, q: np.zeros(q.shape[0]))
    Vq = pot.get("potential_dq", lambda t, q: np.zeros(q.shape))
    Vqq = pot.get("potential_dqq", lambda t, q: np.zeros((q.shape[0], n, n)))
    b = 4.0 * quartic

    def ev(t, q, v):
        s2 = np.einsum("mi,mi->m", v, v)
        return 0.5 * mass * s2 + quartic * s2 ** 2 - V(t, q)

    def d_v(t, q, v):
        s2 = np.einsum("mi,mi->m", v, v)
        return (mass + b * s2)[:, None] * v

    def d_vv(t, q, v):
        s2 = np.einsum("mi,mi->m", v, v)
        return (mass + b * s2)[:, None, None] * np.eye(n)[None] + 2.0 * b * np.einsum("mi,mj->mij", v, v)

    def d_q(t, q, v):
        return -Vq(t, q)

    def d_vq(t, q, v):
        return np.zeros((q.shape[0], n, n))

    def d_qq(t, q, v):
        return -Vqq(t, q)

    return LagrangianModel(dim=n, eval=ev, d_q=d_q, d_v=d_v, d_vv=d_vv, d_vq=d_vq, d_qq=d_qq,
                           family="polynomial_velocity", name="quartic_velocity",
                           ell0=0.5 * mass, c=0.0, ell2=mass)


def from_block(block:Dict[str, Any], dim:int) -> LagrangianModel:
    """ build a model from the "lagrangian" block of a problem file """
    family = block.get("family")
    params = {k: v for k, v in block.items() if k not in ("family", "constants")}
    constants = block.get("constants") or {}
    if family == "electromagnetic":
        model = electromagnetic(
            dim,
            kinetic=params.get("kinetic"),
            magnetic=params.get("magnetic"),
            magnetic_field=params.get("magnetic_field"),
            potential=parse_potential(params.get("potential", []), dim),
        )
    elif family == "pendulum":
        model = pendulum(amplitude=float(params.get("amplitude", 0.5)), dim=dim)
    elif family == "duffing":
        model = duffing(omega=float(params.get("omega", 1.5 * np.pi)),
                        quartic=float(params.get("quartic", 0.25)), dim=dim)
    elif family == "inverted_oscillator":
        model = inverted_oscillator(omega=float(params.get("omega", 1.5 * np.pi)), dim=dim)
    elif family == "quartic_velocity":
        model = quartic_velocity(quartic=float(params.get("quartic", 0.25)), mass=float(params.get("mass", 1.0)),
                                 dim=dim, potential=parse_potential(params.get("potential", []), dim))
    elif family == "free_particle":
        model = free_particle(dim=dim, mass=float(params.get("mass", 1.0)))
    else:
        raise ValueError(
            f"Error: unknown Lagrangian family {family}, use one of these families: electromagnetic, pendulum, "
            "duffing, inverted_oscillator, quartic_velocity, free_particle")
    allowed = {"ell0", "c", "ell1", "ell2", "ell3", "ell4"}
    unknown = set(constants) - allowed
    if unknown:
        raise ValueError(f"Error: unknown Lagrangian constants {sorted(unknown)}")
    if constants:
        model = model.with_constants(**{k: float(v) for k, v in constants.items()})
    return model
