"""Time-domain integration of the reduced grid ODE and PMU sampling.

Simulations start from the pre-attack equilibrium (x = 0) with the
attack switched on at t = 0 and run a fixed-step RK4. PMU windows are
decimated from the trajectory at the synchrophasor reporting rate and
carry absolute frequency (nominal 50 Hz plus the deviation) and the
phase-angle deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridCapsError, StructuralError
from .nn import backend

NOMINAL_HZ = 50.0
PMU_PERIOD_S = 0.02         # 50 frames/s
WINDOW_S = 2.0              # observation window length
WINDOW_SAMPLES = 100


class WindowRangeError(GridCapsError):
    """Requested window falls outside the simulated trajectory."""


@dataclass(frozen=True)
class Trajectory:
    """Generator-state history on the integrator grid (deviation units)."""

    times: np.ndarray           # (steps+1,)
    delta: np.ndarray           # (N_G, steps+1) rad
    omega: np.ndarray           # (N_G, steps+1) rad/s
    diverged_at: float | None = None

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def duration(self):
        return float(self.times[-1])

    def states(self):
        return np.vstack([self.delta, self.omega])


@dataclass(frozen=True)
class PmuWindow:
    """N_G x T x 2 sample block: channel 0 frequency (Hz), channel 1 angle (rad)."""

    data: np.ndarray
    t_start: float = 0.0
    sample_period: float = PMU_PERIOD_S

    @property
    def n_gen(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]


def simulate(model, duration=3.0, dt=0.001) -> Trajectory:
    """Integrate xdot = A x + b from rest over [0, duration].

    Divergent runs are truncated at the first non-finite state and
    flagged rather than propagated as NaNs.
    """
    if dt > 0.005:
        raise StructuralError(f"integrator step {dt} exceeds the 5 ms cap")
    steps = int(round(duration / dt))
    ng = model.n_gen
    x0 = np.zeros(2 * ng)
    states = backend.active().rk4_lti(model.a, model.b, x0, dt, steps)
    times = np.arange(steps + 1) * dt
    diverged_at = None
    bad = ~np.all(np.isfinite(states), axis=1)
    if bad.any():
        first = int(np.argmax(bad))
        diverged_at = float(times[first])
        states = states[:first]
        times = times[:first]
    return Trajectory(
        times=times,
        delta=np.ascontiguousarray(states[:, :ng].T),
        omega=np.ascontiguousarray(states[:, ng:].T),
        diverged_at=diverged_at,
    )


def to_pmu_window(traj: Trajectory, t_start=0.0, n_samples=WINDOW_SAMPLES,
                  sample_period=PMU_PERIOD_S) -> PmuWindow:
    """Decimate a trajectory to PMU samples by nearest-grid-point pick."""
    dt = traj.dt
    idx = np.rint((t_start + np.arange(n_samples) * sample_period) / dt).astype(int)
    if idx[0] < 0 or idx[-1] >= traj.times.size:
        end = t_start + (n_samples - 1) * sample_period
        raise WindowRangeError(
            f"window [{t_start}, {end}] s outside trajectory of {traj.duration} s"
        )
    freq = NOMINAL_HZ + traj.omega[:, idx] / (2.0 * math.pi)
    data = np.stack([freq, traj.delta[:, idx]], axis=-1)
    return PmuWindow(data=data, t_start=float(t_start), sample_period=float(sample_period))


def delayed_window(traj: Trajectory, delay_s: float) -> PmuWindow:
    """Observation window starting ``delay_s`` after the attack onset.

    Emulates an operator that reacts late: the classifier still sees a
    2 s window, but shifted. Delays follow the 0.1 s evaluation grid.
    """
    k = round(delay_s / 0.1)
    if not (0 <= k <= 10) or abs(delay_s - 0.1 * k) > 1e-9:
        raise StructuralError(f"delay {delay_s} not on the 0.0-1.0 s grid (0.1 s steps)")
    return to_pmu_window(traj, t_start=delay_s)
