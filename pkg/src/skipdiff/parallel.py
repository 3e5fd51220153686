"""Draft-and-refine parallel schedulers.

Aggressive mode: from an anchor (x_t, eps_t), draft x_{t-1}..x_{t-k} with skip
transitions, evaluate all k noises in one parallel round, replay the unit-step
updates to refine, and reuse the draft-evaluated eps_{t-k} at the next anchor.
One parallel round per k steps; T+1 evaluations total; ideal speedup k.

Conservative mode: each block starts with a stand-alone evaluation at the
refined anchor, then one parallel round of k draft evaluations, and uses
eps_{t-k} to push one extra unit step. Two rounds per k+1 steps; T evaluations
total; ideal speedup (k+1)/2.

Determinism: all noise comes from counter-based RngStream keys, drafts are
computed on the scheduler thread, and round results are gathered by task
index, so outputs are bit-identical across worker counts and completion
orders.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .denoiser import (
    Denoiser,
    GaussianMixture,
    VirtualClock,
    evaluate,
    latency_of,
    velocity_oracle,
)
from .errors import InvalidPlanParams, PlanMismatch, WorkerFailure
from .rng import RngStream, Role, derive_noise
from .schedule import NoiseSchedule, SigmaGrid
from .sequential import Trajectory, _Timer, predicted_x0
from .transitions import VarianceRule, ddim_skip, ddpm_skip_sample, euler_skip

WORKER_CAP_ENV = "SKIPDIFF_MAX_WORKERS"


class Mode(Enum):
    AGGRESSIVE = "aggressive"
    CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class BlockPlan:
    """Partition of T..1 into blocks (anchor_t, k). Aggressive blocks consume
    k steps; conservative blocks consume k+1 (a degenerate final k=0 block
    consumes 1 when T = 1 mod (devices+1) and no donor block exists)."""

    mode: Mode
    blocks: tuple
    total_rounds: int
    total_evals: int


@dataclass
class RoundReport:
    anchor_t: int
    parallel_evals: int
    round_wall_ms: float
    worker_spans: list = field(default_factory=list)  # (task index, start ms, end ms)


def plan_blocks(T: int, devices: int, mode: Mode) -> BlockPlan:
    if T < 1 or devices < 1:
        raise InvalidPlanParams(f"need T >= 1 and devices >= 1, got ({T}, {devices})")
    blocks = []
    t = T
    if mode is Mode.AGGRESSIVE:
        while t > 0:
            k = min(devices, t)
            blocks.append((t, k))
            t -= k
        return BlockPlan(mode, tuple(blocks), total_rounds=1 + len(blocks), total_evals=T + 1)
    while t > 0:
        consume = min(devices + 1, t)
        # never leave a remainder of exactly 1 if this block can absorb it
        if t - consume == 1 and consume > 2:
            consume -= 1
        blocks.append((t, consume - 1))
        t -= consume
    rounds = sum(2 if k >= 1 else 1 for _, k in blocks)
    return BlockPlan(mode, tuple(blocks), total_rounds=rounds, total_evals=T)


def _worker_cap(requested: int) -> int:
    cap = os.environ.get(WORKER_CAP_ENV)
    if cap:
        return max(1, min(requested, int(cap)))
    return requested


def execute_round(
    d: Denoiser,
    s: NoiseSchedule,
    tasks: list,
    devices: int,
    *,
    anchor_t: int,
    pool: ThreadPoolExecutor | None = None,
    clock: VirtualClock | None = None,
    submit_order=None,
) -> tuple[list, RoundReport]:
    """Dispatch all (x, t) tasks concurrently; return noise predictions ordered
    by task index plus a RoundReport. Round wall time is the max over workers
    (plus dispatch overhead), not the sum."""
    model = latency_of(d)
    overhead_ms = model.dispatch_overhead_ms if model else 0.0

    def fn(x, t, sub_clock):
        return evaluate(d, s, x, t, sub_clock)

    return _execute_tasks(
        fn, tasks, devices, anchor_t=anchor_t, pool=pool, clock=clock,
        submit_order=submit_order, overhead_ms=overhead_ms,
    )


def _execute_tasks(
    fn,
    tasks: list,
    devices: int,
    *,
    anchor_t: int,
    pool: ThreadPoolExecutor | None = None,
    clock: VirtualClock | None = None,
    submit_order=None,
    overhead_ms: float = 0.0,
) -> tuple[list, RoundReport]:
    if len(tasks) > devices:
        raise InvalidPlanParams(f"{len(tasks)} tasks exceed {devices} devices")

    if clock is not None:
        # virtual clock: serial execution, per-task sub-accumulators, round
        # time is their max
        results, spans = [], []
        for i, (x, t) in enumerate(tasks):
            sub = VirtualClock()
            results.append(fn(x, t, sub))
            spans.append((i, 0.0, sub.elapsed_ms))
        round_ms = max((ms for _, _, ms in spans), default=0.0) + overhead_ms
        clock.charge(round_ms)
        return results, RoundReport(anchor_t, len(tasks), round_ms, spans)

    t0 = time.monotonic()
    if overhead_ms > 0:
        time.sleep(overhead_ms / 1000.0)

    def work(i):
        x, t = tasks[i]
        start = time.monotonic()
        val = fn(x, t, None)
        return i, val, start, time.monotonic()

    order = list(submit_order) if submit_order is not None else range(len(tasks))
    owns_pool = pool is None
    if owns_pool:
        pool = ThreadPoolExecutor(max_workers=_worker_cap(devices))
    try:
        futures = [pool.submit(work, i) for i in order]
        results = [None] * len(tasks)
        spans = [None] * len(tasks)
        error = None
        for f in futures:
            try:
                i, val, start, end = f.result()
            except Exception as exc:  # drain the round before raising
                if error is None:
                    error = exc
                continue
            results[i] = val
            spans[i] = (i, (start - t0) * 1000.0, (end - t0) * 1000.0)
        if error is not None:
            raise WorkerFailure(str(error)) from error
    finally:
        if owns_pool:
            pool.shutdown(wait=True)
    round_ms = (time.monotonic() - t0) * 1000.0
    return results, RoundReport(anchor_t, len(tasks), round_ms, spans)


def _draft_noise(stream: RngStream, t: int, i: int, stochastic: bool, shape):
    """Noise for the i-th draft from anchor t. The i=1 draft IS the kept state
    for timestep t-1, so it uses the TRANSITION key; deeper drafts are
    discarded after their evaluation and use DRAFT keys."""
    if not stochastic:
        return None
    role = Role.TRANSITION if i == 1 else Role.DRAFT
    return derive_noise(stream, t - i, role, shape)


def _refine_noise(stream: RngStream, u: int, stochastic: bool, shape):
    if not stochastic:
        return None
    return derive_noise(stream, u, Role.TRANSITION, shape)


def run_aggressive(
    s: NoiseSchedule,
    d: Denoiser,
    x_T: np.ndarray,
    devices: int,
    rule: VarianceRule,
    stream: RngStream,
    *,
    clock: VirtualClock | None = None,
    workers: int | None = None,
    submit_order_seed: int | None = None,
    recompute_anchor_eps: bool = False,
    update_family: str = "ddim",
) -> tuple[Trajectory, list[RoundReport]]:
    """Aggressive draft-and-refine run. `workers` sizes the physical pool
    (defaults to `devices`; never changes outputs), `submit_order_seed`
    shuffles per-round submission order (for order-invariance testing), and
    `recompute_anchor_eps` replaces each cached anchor eps with a fresh
    stand-alone evaluation at the refined state (ablation; adds one round and
    one eval per interior block). `update_family` selects the block update:
    "ddim" (default) or "ddpm" (posterior skips; always stochastic, `rule`
    ignored)."""
    plan = plan_blocks(s.T, devices, Mode.AGGRESSIVE)
    return _run(plan, s, d, x_T, devices, rule, stream, clock, workers,
                submit_order_seed, recompute_anchor_eps, update_family)


def run_conservative(
    s: NoiseSchedule,
    d: Denoiser,
    x_T: np.ndarray,
    devices: int,
    rule: VarianceRule,
    stream: RngStream,
    *,
    clock: VirtualClock | None = None,
    workers: int | None = None,
    submit_order_seed: int | None = None,
    update_family: str = "ddim",
) -> tuple[Trajectory, list[RoundReport]]:
    """Conservative run: stand-alone anchor evaluation, then one parallel
    round per block, pushing k+1 steps."""
    plan = plan_blocks(s.T, devices, Mode.CONSERVATIVE)
    return _run(plan, s, d, x_T, devices, rule, stream, clock, workers,
                submit_order_seed, False, update_family)


def _run(plan, s, d, x_T, devices, rule, stream, clock, workers,
         submit_order_seed, recompute_anchor_eps, update_family="ddim"):
    if update_family not in ("ddim", "ddpm"):
        raise ValueError(f"unknown update family: {update_family!r}")
    stochastic = rule.stochastic or update_family == "ddpm"

    def skip(t, k, x, eps, z):
        # same arithmetic as the sequential samplers, one fused k-step jump
        if update_family == "ddim":
            return ddim_skip(s, t, k, x, eps, rule, z)
        return ddpm_skip_sample(s, t, k, x, predicted_x0(s, x, eps, t), z)

    x = np.asarray(x_T, dtype=float)
    traj = Trajectory(states=[(s.T, x)])
    reports: list[RoundReport] = []
    shuffle = (
        np.random.default_rng(submit_order_seed) if submit_order_seed is not None else None
    )
    timer = _Timer(clock)
    pool = ThreadPoolExecutor(max_workers=_worker_cap(workers or devices))

    def round_(tasks, anchor_t):
        order = shuffle.permutation(len(tasks)) if shuffle is not None else None
        vals, report = execute_round(
            d, s, tasks, devices, anchor_t=anchor_t, pool=pool, clock=clock,
            submit_order=order,
        )
        reports.append(report)
        traj.eval_count += len(tasks)
        return vals

    try:
        eps_anchor = None
        if plan.mode is Mode.AGGRESSIVE:
            (eps_anchor,) = round_([(x, s.T)], s.T)
        for t, k in plan.blocks:
            if plan.mode is Mode.CONSERVATIVE:
                (eps_anchor,) = round_([(x, t)], t)
                if k == 0:  # degenerate final block: single unit step, no parallel round
                    x = skip(t, 1, x, eps_anchor,
                             _refine_noise(stream, t - 1, stochastic, x.shape))
                    traj.states.append((t - 1, x))
                    continue
            elif recompute_anchor_eps and t != s.T:
                (eps_anchor,) = round_([(x, t)], t)
            drafts = [
                skip(t, i, x, eps_anchor, _draft_noise(stream, t, i, stochastic, x.shape))
                for i in range(1, k + 1)
            ]
            eps = round_([(drafts[i - 1], t - i) for i in range(1, k + 1)], t)
            x = drafts[0]
            traj.states.append((t - 1, x))
            last = k if plan.mode is Mode.AGGRESSIVE else k + 1
            for i in range(2, last + 1):
                x = skip(t - i + 1, 1, x, eps[i - 2],
                         _refine_noise(stream, t - i, stochastic, x.shape))
                traj.states.append((t - i, x))
            eps_anchor = eps[k - 1]  # aggressive: cached draft-state eps for the next anchor
    finally:
        pool.shutdown(wait=True)

    if traj.states[-1][0] != 0:
        raise PlanMismatch(f"trajectory ends at t={traj.states[-1][0]}, expected 0")
    expected = plan.total_evals
    if recompute_anchor_eps:
        expected += sum(1 for t, _ in plan.blocks if t != s.T)
    if traj.eval_count != expected:
        raise PlanMismatch(f"{traj.eval_count} evals, plan expected {expected}")
    traj.wall_ms = timer.elapsed_ms() if clock is not None else sum(
        r.round_wall_ms for r in reports
    )
    return traj, reports


def run_parallel_euler(
    g: SigmaGrid,
    gm: GaussianMixture,
    x_init: np.ndarray,
    devices: int,
    mode: Mode,
    *,
    workers: int | None = None,
) -> tuple[Trajectory, list[RoundReport]]:
    """Euler-family variant of the two schedulers on a sigma grid, using the
    analytic velocity oracle. Deterministic; trajectory timesteps count
    remaining grid intervals, as in sample_euler. Velocity tasks at sigma=0
    (the final grid node) are dropped: nothing downstream consumes them."""
    plan = plan_blocks(g.N, devices, mode)
    x = np.asarray(x_init, dtype=float)
    traj = Trajectory(states=[(g.N, x)])
    reports: list[RoundReport] = []
    pool = ThreadPoolExecutor(max_workers=_worker_cap(workers or devices))
    timer = _Timer(None)

    def fn(x_, idx, _clock):
        return velocity_oracle(gm, x_, float(g.sigmas[idx]))

    def round_(tasks, anchor_rem):
        live = [(xx, idx) for xx, idx in tasks if g.sigmas[idx] > 0.0]
        vals, report = _execute_tasks(fn, live, devices, anchor_t=anchor_rem, pool=pool)
        reports.append(report)
        traj.eval_count += len(live)
        return {idx: v for (_, idx), v in zip(live, vals)}

    try:
        v_anchor = None
        if mode is Mode.AGGRESSIVE:
            v_anchor = round_([(x, 0)], g.N)[0]
        for t_rem, k in plan.blocks:
            i = g.N - t_rem
            if mode is Mode.CONSERVATIVE:
                v_anchor = round_([(x, i)], t_rem)[i]
                if k == 0:
                    x = euler_skip(g, i, 1, x, v_anchor)
                    traj.states.append((t_rem - 1, x))
                    continue
            drafts = [euler_skip(g, i, j, x, v_anchor) for j in range(1, k + 1)]
            vels = round_([(drafts[j - 1], i + j) for j in range(1, k + 1)], t_rem)
            x = drafts[0]
            traj.states.append((t_rem - 1, x))
            last = k if mode is Mode.AGGRESSIVE else k + 1
            for j in range(2, last + 1):
                x = euler_skip(g, i + j - 1, 1, x, vels[i + j - 1])
                traj.states.append((t_rem - j, x))
            v_anchor = vels.get(i + k)
    finally:
        pool.shutdown(wait=True)

    if traj.states[-1][0] != 0:
        raise PlanMismatch(f"trajectory ends at t={traj.states[-1][0]}, expected 0")
    traj.wall_ms = timer.elapsed_ms()
    return traj, reports
