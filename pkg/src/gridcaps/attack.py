"""Load-altering attack scenarios: sampling, screening, and the power limit.

A scenario couples a static load step (MW, sparse over load buses) with
one feedback gain row that modulates the compromised load against the
sensed generator frequency. Sampling rejection-screens the gain until
the closed loop leaves the stable region, which is what makes a load
alteration an attack rather than an ordinary fluctuation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import grid
from .errors import SamplingError, StructuralError
from .matpower import BusTopology

SINGLE_POINT = "single_point"
MULTI_POINT = "multi_point"


@dataclass(frozen=True)
class AttackScenario:
    """One labeled attack: static step, feedback gain, and the source bus."""

    epsilon_mw: np.ndarray        # (N_L,) static load step per load bus
    gain_pu: np.ndarray           # (N_L, N_G) feedback gains
    label_bus: int                # load bus hosting the feedback attack
    kind: str = SINGLE_POINT

    def validate(self, topology: BusTopology):
        nl, ng = topology.n_load, topology.n_gen
        if self.epsilon_mw.shape != (nl,) or self.gain_pu.shape != (nl, ng):
            raise StructuralError("scenario arrays do not match the topology")
        if self.label_bus not in topology.load_buses:
            raise StructuralError(f"label bus {self.label_bus} is not a load bus")
        row = topology.load_index(self.label_bus)
        gain_rows = {int(r) for r in np.nonzero(self.gain_pu)[0]}
        if gain_rows - {row}:
            raise StructuralError("feedback gain present on a non-label bus")
        if self.kind == SINGLE_POINT:
            eps_rows = {int(r) for r in np.nonzero(self.epsilon_mw)[0]}
            if eps_rows - {row}:
                raise StructuralError("single-point static step off the label bus")
        return self


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for Monte Carlo scenario sampling."""

    kind: str = SINGLE_POINT
    eps_mw: tuple = (0.1, 2.5)            # static step magnitude range
    gain_pu: tuple = (0.5, 100.0)         # feedback gain search range
    max_rejections: int = 400
    extra_eps_buses: tuple = (1, 3)       # multi-point: off-label static steps
    vulnerable_fraction: float = 0.5      # share of nominal bus load assumed open
    vulnerable_floor_mw: float = 10.0     # compromised fleet possible on unloaded buses
    enforce_limit: bool = True            # apply the power-limit filter during generation
    gain_temper: bool = True              # pull accepted gains back toward the threshold
    temper_spread: float = 0.25           # relative margin kept above the threshold
    witness_band: tuple | None = (2.5, 12.6)  # destabilized-mode frequency window (rad/s)

    def to_dict(self):
        return {
            "kind": self.kind,
            "eps_mw": list(self.eps_mw),
            "gain_pu": list(self.gain_pu),
            "max_rejections": self.max_rejections,
            "extra_eps_buses": list(self.extra_eps_buses),
            "vulnerable_fraction": self.vulnerable_fraction,
            "vulnerable_floor_mw": self.vulnerable_floor_mw,
            "enforce_limit": self.enforce_limit,
            "gain_temper": self.gain_temper,
            "temper_spread": self.temper_spread,
            "witness_band": list(self.witness_band) if self.witness_band else None,
        }

    @classmethod
    def from_dict(cls, raw):
        cfg = cls()
        fields = {k: raw[k] for k in raw if k in cfg.__dataclass_fields__}
        for key in ("eps_mw", "gain_pu", "extra_eps_buses", "witness_band"):
            if key in fields and fields[key] is not None:
                fields[key] = tuple(fields[key])
        return replace(cfg, **fields)


def vulnerable_load_mw(topology: BusTopology, config: ScenarioConfig) -> np.ndarray:
    """Per-load-bus compromised-fleet capacity (MW)."""
    loads = np.array([topology.loads_mw.get(b, 0.0) for b in topology.load_buses])
    return np.maximum(config.vulnerable_fraction * loads, config.vulnerable_floor_mw)


def scenario_model(topology, suscept, params, scenario: AttackScenario,
                   case="") -> grid.StateSpaceModel:
    """Assemble the reduced state space for a scenario (MW converted to pu)."""
    eps_pu = scenario.epsilon_mw / topology.base_mva
    return grid.assemble_dynamics(
        topology, suscept, params, gain_pu=scenario.gain_pu, epsilon_pu=eps_pu, case=case
    )


def sample_scenario(rng, topology, suscept, params, config: ScenarioConfig,
                    label_bus=None) -> AttackScenario:
    """Draw one scenario whose closed loop fails the stability screen.

    The sensed generator and the gain magnitude are resampled until the
    eigenvalues leave the stable class (right-half-plane mode or a
    poorly damped band mode). The static step does not influence the
    screen, so it is drawn once at the end.
    """
    nl, ng = topology.n_load, topology.n_gen
    if label_bus is None:
        label_bus = int(topology.load_buses[rng.integers(nl)])
    row = topology.load_index(label_bus)

    band = config.witness_band

    def accepted_status(report):
        """Screen: non-stable, with the triggering mode inside the target band.

        D-LAAs of interest excite electromechanical-range oscillations;
        restricting the destabilized mode keeps the PMU window (50
        frames/s over 2 s) informative about it.
        """
        if report.status == grid.STABLE:
            return False
        if band is None:
            return True
        return band[0] <= abs(report.witness.imag) <= band[1]

    def status_of(col, magnitude):
        gain = np.zeros((nl, ng))
        gain[row, col] = magnitude
        model = grid.assemble_dynamics(topology, suscept, params, gain_pu=gain)
        return grid.classify_stability(grid.eigenvalues(model.a)), gain

    lo, hi = config.gain_pu
    accepted = None
    for _ in range(config.max_rejections):
        col = int(rng.integers(ng))
        magnitude = float(rng.uniform(lo, hi))
        report, gain = status_of(col, magnitude)
        if accepted_status(report):
            accepted = (col, magnitude, gain)
            break
    if accepted is None:
        raise SamplingError(
            f"no destabilizing gain found for bus {label_bus} within "
            f"{config.max_rejections} draws",
            bus=label_bus,
        )
    col, magnitude, gain = accepted

    if config.gain_temper:
        # Bisect down to the acceptance boundary, then keep a random margin
        # above it. Near-threshold gains stay destabilizing but mild
        # enough that the attacker power limit remains satisfiable.
        t_lo, t_hi = 0.0, 1.0
        for _ in range(24):
            mid = 0.5 * (t_lo + t_hi)
            report, g_mid = status_of(col, mid * magnitude)
            if accepted_status(report):
                t_hi, gain = mid, g_mid
            else:
                t_lo = mid
        margin = 1.0 + float(rng.uniform(0.0, config.temper_spread))
        report, g_final = status_of(col, t_hi * magnitude * margin)
        if accepted_status(report):
            gain = g_final

    eps = np.zeros(nl)
    e_lo, e_hi = config.eps_mw
    if config.kind == SINGLE_POINT:
        eps[row] = rng.uniform(e_lo, e_hi)
    elif config.kind == MULTI_POINT:
        k_lo, k_hi = config.extra_eps_buses
        count = int(rng.integers(k_lo, k_hi + 1))
        others = [i for i in range(nl) if i != row]
        chosen = rng.choice(len(others), size=min(count, len(others)), replace=False)
        for i in chosen:
            eps[others[int(i)]] = rng.uniform(e_lo, e_hi)
    else:
        raise StructuralError(f"unknown scenario kind {config.kind!r}")

    scenario = AttackScenario(epsilon_mw=eps, gain_pu=gain, label_bus=label_bus,
                              kind=config.kind)
    return scenario.validate(topology)


def feedback_power_mw(scenario, trajectory, base_mva) -> np.ndarray:
    """|gain . omega(t)| in MW for every attacked row; shape (rows, steps)."""
    rows = np.unique(np.nonzero(scenario.gain_pu)[0])
    if rows.size == 0:
        return np.zeros((0, trajectory.omega.shape[1]))
    return np.abs(scenario.gain_pu[rows] @ trajectory.omega) * base_mva


def validate_limit(scenario, trajectory, p_lv_mw, base_mva) -> bool:
    """Check the attacker power budget along a simulated trajectory.

    The feedback component may never exceed half the compromised
    capacity left after the static step. A static step larger than the
    available capacity is not a scenario at all.
    """
    rows = np.unique(np.nonzero(scenario.gain_pu)[0])
    p_lv_mw = np.asarray(p_lv_mw, dtype=float)
    if np.any(scenario.epsilon_mw > p_lv_mw + 1e-12):
        bad = int(np.argmax(scenario.epsilon_mw - p_lv_mw))
        raise StructuralError(
            f"static step exceeds vulnerable load on load-bus index {bad}"
        )
    if rows.size == 0:
        return True
    bound = (p_lv_mw[rows] - scenario.epsilon_mw[rows]) / 2.0
    peak = feedback_power_mw(scenario, trajectory, base_mva).max(axis=1)
    return bool(np.all(peak <= bound + 1e-12))
