"""Linearized grid dynamics under load-altering attacks.

Builds the reactance-only susceptance matrix, eliminates the algebraic
load-angle block to get a plain ODE ``xdot = A x + b`` over the
generator states x = [delta; omega] (deviation coordinates), and
classifies small-signal stability from the eigenvalues of A.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ReductionError, StructuralError
from .matpower import BusTopology

# class = unstable when an eigenvalue real part exceeds this guard
UNSTABLE_REAL_EPS = 1e-9
# poorly damped oscillation band: damping ratio and natural frequency (rad/s)
SEMI_ZETA_MAX = 0.03
SEMI_WN_MIN = 2.5
SEMI_WN_MAX = 12.6

STABLE, SEMI_UNSTABLE, UNSTABLE = "stable", "semi_unstable", "unstable"


@dataclass(frozen=True)
class SusceptancePartition:
    """Blocks of the bus susceptance matrix in (gen, load) ordering."""

    b_gg: np.ndarray
    b_gl: np.ndarray
    b_lg: np.ndarray
    b_ll: np.ndarray

    @property
    def full(self):
        top = np.hstack([self.b_gg, self.b_gl])
        bot = np.hstack([self.b_lg, self.b_ll])
        return np.vstack([top, bot])


@dataclass(frozen=True)
class DynamicParams:
    """Generator/control constants for one case, all per unit."""

    inertia: np.ndarray
    damping: np.ndarray
    gov_kp: np.ndarray
    gov_ki: np.ndarray
    load_damping: np.ndarray

    def validate(self, topology: BusTopology):
        ng, nl = topology.n_gen, topology.n_load
        for name, arr, n in (
            ("inertia", self.inertia, ng),
            ("damping", self.damping, ng),
            ("gov_kp", self.gov_kp, ng),
            ("gov_ki", self.gov_ki, ng),
            ("load_damping", self.load_damping, nl),
        ):
            if arr.shape != (n,):
                raise StructuralError(f"{name} has shape {arr.shape}, expected ({n},)")
        if np.any(self.inertia <= 0):
            raise StructuralError("all inertias must be positive")
        if np.any(self.gov_ki < 0) or np.any(self.load_damping < 0):
            raise StructuralError("gains and load damping must be non-negative")
        return self


@dataclass(frozen=True)
class StateSpaceModel:
    """Reduced ODE xdot = A x + b with the affine map recovering load angles.

    ``reduction`` is N_L x (2 N_G + 1); load angles are
    ``reduction @ [x; 1]``. The last column carries the static-attack
    offset, so it is scenario specific.
    """

    a: np.ndarray
    b: np.ndarray
    reduction: np.ndarray
    case: str = ""

    @property
    def n_gen(self):
        return self.a.shape[0] // 2

    def load_angles(self, x):
        aug = np.concatenate([np.asarray(x, dtype=float), [1.0]])
        return self.reduction @ aug


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: tuple
    status: str
    witness: complex


def load_params(case: str) -> DynamicParams:
    """Load the per-case dynamic parameter file shipped with the package."""
    ref = importlib.resources.files("gridcaps.data") / "params" / f"{case}.json"
    try:
        raw = json.loads(ref.read_text())
    except FileNotFoundError:
        raise StructuralError(f"no dynamic parameters for case {case!r}") from None
    return params_from_dict(raw)


def params_from_dict(raw: dict, n_load: int | None = None) -> DynamicParams:
    def arr(key):
        return np.asarray(raw[key], dtype=float)

    dl = raw["load_damping"]
    if np.isscalar(dl):
        if n_load is None:
            n_load = raw.get("n_load")
        dl = np.full(int(n_load), float(dl)) if n_load else np.asarray([dl], float)
    else:
        dl = np.asarray(dl, dtype=float)
    return DynamicParams(arr("inertia"), arr("damping"), arr("gov_kp"), arr("gov_ki"), dl)


def build_susceptance(topology: BusTopology) -> SusceptancePartition:
    """Assemble the reactance-only susceptance matrix and partition it.

    Off-diagonals accumulate -1/x per branch, diagonals +1/x, so rows sum
    to zero and the matrix is symmetric by construction.
    """
    order = list(topology.generator_buses) + list(topology.load_buses)
    index = {bus: k for k, bus in enumerate(order)}
    n = len(order)
    b = np.zeros((n, n))
    for f, t, x in topology.branches:
        if x == 0:
            raise NumericError(f"branch ({f},{t}) has zero reactance")
        w = 1.0 / x
        i, j = index[f], index[t]
        b[i, i] += w
        b[j, j] += w
        b[i, j] -= w
        b[j, i] -= w
    ng = topology.n_gen
    return SusceptancePartition(
        b_gg=b[:ng, :ng], b_gl=b[:ng, ng:], b_lg=b[ng:, :ng], b_ll=b[ng:, ng:]
    )


def assemble_dynamics(topology, suscept, params, gain_pu=None, epsilon_pu=None,
                      case="") -> StateSpaceModel:
    """Reduce the DAE to an ODE over generator angle/frequency deviations.

    The load-angle block is algebraic; solving it against the load
    partition folds the attack feedback into A and the static load step
    into b. The secured load level drops out entirely because the states
    are deviations from the pre-attack equilibrium.
    """
    ng, nl = topology.n_gen, topology.n_load
    gain = np.zeros((nl, ng)) if gain_pu is None else np.asarray(gain_pu, dtype=float)
    eps = np.zeros(nl) if epsilon_pu is None else np.asarray(epsilon_pu, dtype=float)
    if gain.shape != (nl, ng):
        raise StructuralError(f"gain matrix shape {gain.shape}, expected {(nl, ng)}")
    if eps.shape != (nl,):
        raise StructuralError(f"epsilon shape {eps.shape}, expected ({nl},)")

    try:
        s_lg = np.linalg.solve(suscept.b_ll, suscept.b_lg)      # B_LL^-1 B_LG
        s_k = np.linalg.solve(suscept.b_ll, gain)               # B_LL^-1 K
        s_e = np.linalg.solve(suscept.b_ll, eps)                # B_LL^-1 eps
    except np.linalg.LinAlgError:
        raise ReductionError(
            f"load susceptance block is singular for case {case or topology.name!r}"
        ) from None

    minv = 1.0 / params.inertia
    b_red = suscept.b_gg - suscept.b_gl @ s_lg
    a = np.zeros((2 * ng, 2 * ng))
    a[:ng, ng:] = np.eye(ng)
    a[ng:, :ng] = -minv[:, None] * (np.diag(params.gov_ki) + b_red)
    a[ng:, ng:] = -minv[:, None] * (
        np.diag(params.gov_kp + params.damping) + suscept.b_gl @ s_k
    )

    b = np.zeros(2 * ng)
    b[ng:] = minv * (suscept.b_gl @ s_e)

    reduction = np.zeros((nl, 2 * ng + 1))
    reduction[:, :ng] = -s_lg
    reduction[:, ng:2 * ng] = s_k
    reduction[:, 2 * ng] = -s_e
    return StateSpaceModel(a=a, b=b, reduction=reduction, case=case or topology.name)


def eigenvalues(a) -> np.ndarray:
    """Eigenvalues of a real square matrix, sorted by (re, im) descending."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericError(f"matrix of shape {a.shape} is not square")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix contains non-finite entries")
    try:
        eigs = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue iteration failed: {exc}") from None
    order = np.lexsort((-eigs.imag, -eigs.real))
    return eigs[order]


def classify_stability(eigs) -> StabilityReport:
    """Bucket a spectrum into stable / semi_unstable / unstable.

    Unstable needs a right-half-plane eigenvalue (real part above a small
    numerical guard). Otherwise a complex pair with damping ratio <= 3%
    inside the 2.5-12.6 rad/s band flags a poorly damped (semi-unstable)
    oscillation.
    """
    eigs = tuple(complex(e) for e in np.asarray(eigs, dtype=complex))
    if not eigs:
        raise NumericError("empty eigenvalue list")
    worst = max(eigs, key=lambda e: e.real)
    if worst.real > UNSTABLE_REAL_EPS:
        return StabilityReport(eigs, UNSTABLE, worst)

    candidate = None
    best_zeta = None
    for e in eigs:
        if e.imag == 0:
            continue
        wn = abs(e)
        if wn == 0:
            continue
        zeta = -e.real / wn
        if zeta <= SEMI_ZETA_MAX and SEMI_WN_MIN <= wn <= SEMI_WN_MAX:
            if best_zeta is None or zeta < best_zeta:
                best_zeta, candidate = zeta, e
    if candidate is not None:
        return StabilityReport(eigs, SEMI_UNSTABLE, candidate)
    return StabilityReport(eigs, STABLE, worst)
