"""Single-stream baseline samplers. These are the ground truth the parallel
schedulers must match (exactly, for the state-independent denoiser) or
approximate (within the skip-vs-compose bound, for real denoisers)."""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .denoiser import Denoiser, GaussianMixture, VirtualClock, evaluate, velocity_oracle
from .errors import InvalidSubsequence
from .rng import RngStream, Role
from .schedule import NoiseSchedule, SigmaGrid
from .transitions import VarianceRule, ddim_skip, ddpm_skip_sample, euler_skip


@dataclass
class Trajectory:
    """Ordered (t, x) states from the start of sampling down to t=0, plus
    evaluation and wall-time accounting."""

    states: list[tuple[int, np.ndarray]] = field(default_factory=list)
    eval_count: int = 0
    wall_ms: float = 0.0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1][1]

    def timesteps(self) -> list[int]:
        return [t for t, _ in self.states]


class _Timer:
    """Wall time via a monotonic clock, or simulated time via a VirtualClock."""

    def __init__(self, clock: VirtualClock | None):
        self.clock = clock
        if clock is None:
            self._start = time.monotonic()
        else:
            self._start = clock.elapsed_ms

    def elapsed_ms(self) -> float:
        if self.clock is None:
            return (time.monotonic() - self._start) * 1000.0
        return self.clock.elapsed_ms - self._start


def predicted_x0(s: NoiseSchedule, x_t: np.ndarray, eps: np.ndarray, t: int) -> np.ndarray:
    """x0_hat = (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t)."""
    a_t = s.alpha_bar[t]
    return (x_t - math.sqrt(1.0 - a_t) * eps) / math.sqrt(a_t)


def sample_ddpm(
    s: NoiseSchedule,
    d: Denoiser,
    x_T: np.ndarray,
    noise: RngStream,
    clock: VirtualClock | None = None,
) -> Trajectory:
    """Ancestral DDPM sampling: T unit-step posterior transitions."""
    timer = _Timer(clock)
    x = np.asarray(x_T, dtype=float)
    traj = Trajectory(states=[(s.T, x)])
    for t in range(s.T, 0, -1):
        eps = evaluate(d, s, x, t, clock)
        traj.eval_count += 1
        x0_hat = predicted_x0(s, x, eps, t)
        z = noise.derive(t - 1, Role.TRANSITION, x.shape)
        x = ddpm_skip_sample(s, t, 1, x, x0_hat, z)
        traj.states.append((t - 1, x))
    traj.wall_ms = timer.elapsed_ms()
    return traj


def _check_subsequence(T: int, subsequence) -> list[int]:
    ts = list(subsequence)
    if not ts or ts[-1] != 0 or ts[0] > T:
        raise InvalidSubsequence(f"subsequence must start <= {T} and end at 0: {ts}")
    if any(a <= b for a, b in zip(ts, ts[1:])):
        raise InvalidSubsequence(f"subsequence must be strictly decreasing: {ts}")
    return ts


def sample_ddim(
    s: NoiseSchedule,
    d: Denoiser,
    x_T: np.ndarray,
    rule: VarianceRule,
    noise: RngStream,
    subsequence=None,
    clock: VirtualClock | None = None,
) -> Trajectory:
    """DDIM sampling along a timestep subsequence (default: every step).

    The z consumed by the transition into timestep u is always
    noise.derive(u, TRANSITION); deterministic rules consume no noise.
    """
    ts = _check_subsequence(s.T, subsequence if subsequence is not None else range(s.T, -1, -1))
    timer = _Timer(clock)
    x = np.asarray(x_T, dtype=float)
    traj = Trajectory(states=[(ts[0], x)])
    for t, u in zip(ts, ts[1:]):
        eps = evaluate(d, s, x, t, clock)
        traj.eval_count += 1
        z = noise.derive(u, Role.TRANSITION, x.shape) if rule.stochastic else None
        x = ddim_skip(s, t, t - u, x, eps, rule, z)
        traj.states.append((u, x))
    traj.wall_ms = timer.elapsed_ms()
    return traj


def sample_euler(g: SigmaGrid, gm: GaussianMixture, x_init: np.ndarray) -> Trajectory:
    """Plain Euler integration of dx/dsigma = (x - x0_hat)/sigma down the grid.

    Trajectory timesteps count remaining grid intervals (N at the start, 0 at
    the end), keeping the t-decreasing-to-0 convention."""
    timer = _Timer(None)
    x = np.asarray(x_init, dtype=float)
    traj = Trajectory(states=[(g.N, x)])
    for i in range(g.N):
        v = velocity_oracle(gm, x, float(g.sigmas[i]))
        traj.eval_count += 1
        x = euler_skip(g, i, 1, x, v)
        traj.states.append((g.N - i - 1, x))
    traj.wall_ms = timer.elapsed_ms()
    return traj
