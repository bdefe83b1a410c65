"""End-to-end workloads: Kalman covariance steps, RK4 over a compiled
right-hand side, and the tape-versus-tree benchmark."""
from __future__ import annotations

import gc
import json
import statistics
import sys
import threading
import time
import tracemalloc
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .errors import DiscontinuityError, NonFiniteError, SingularMatrixError
from .interp import _Evaluator, _to_internal, detect_discontinuity, random_bindings
from .pipeline import Compiled, analyze, compile_project
from .runtime import execute, pack_inputs
from .syntax import Project

DEFAULT_SEED = 42


# ------------------------------------------------------------------- Kalman
PREDICT_TEMPLATE = """\
input x: matrix[{n},1]
input P: matrix[{n},{n}]
input F: matrix[{n},{n}]
input Q: matrix[{n},{n}]
output x_pred = F * x
output P_pred = F * P * F^T + Q
"""

# information form: the updated covariance is (q^-1 + h)^-1 with
# q = predicted covariance and h = H^T R^-1 H
UPDATE_TEMPLATE = """\
input x_pred: matrix[{n},1]
input P_pred: matrix[{n},{n}]
input H: matrix[{m},{n}]
input R: matrix[{m},{m}]
input z: matrix[{m},1]
def info(q: matrix[{n},{n}], h: matrix[{n},{n}]) = (q^-1 + h)^-1
output P = info(P_pred, H^T * R^-1 * H)
output x = x_pred + info(P_pred, H^T * R^-1 * H) * H^T * R^-1 * (z - H * x_pred)
"""


def _is_spd(a) -> bool:
    if not np.allclose(a, a.T, rtol=0, atol=1e-12):
        return False
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass
class KalmanModel:
    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.F, self.Q, self.H, self.R = (np.atleast_2d(np.asarray(a, dtype=float))
                                          for a in (self.F, self.Q, self.H, self.R))
        n, m = self.n, self.m
        if not 1 <= n <= 4 or not 1 <= m <= 4:
            raise ValueError("state and measurement dimensions must be in 1..4")
        if (self.F.shape != (n, n) or self.Q.shape != (n, n) or self.H.shape != (m, n)
                or self.R.shape != (m, m)):
            raise ValueError("inconsistent Kalman model dimensions")
        if not _is_spd(self.Q) or not _is_spd(self.R):
            raise ValueError("Q and R must be symmetric positive definite")

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    def predict_source(self) -> str:
        return PREDICT_TEMPLATE.format(n=self.n)

    def update_source(self) -> str:
        return UPDATE_TEMPLATE.format(n=self.n, m=self.m)


def random_spd(n, rng, low=0.5, high=2.0):
    """SPD matrix with eigenvalues drawn from [low, high]."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    a = q @ np.diag(rng.uniform(low, high, n)) @ q.T
    return (a + a.T) / 2


def random_kalman_model(n, m, rng) -> KalmanModel:
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    F = q @ np.diag(rng.uniform(0.6, 0.99, n))
    return KalmanModel(F, 0.1 * random_spd(n, rng), rng.normal(size=(m, n)), random_spd(m, rng))


@dataclass
class KalmanStep:
    model: KalmanModel
    predict: Compiled
    update: Compiled
    _runners: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._runners = {"predict": self.predict.runner(), "update": self.update.runner()}

    def step(self, x, P, z):
        """One predict + update; returns ``(x, P, P_pred)``."""
        m = self.model
        pr = self._runners["predict"]
        pr.load({"x": np.reshape(x, (m.n, 1)), "P": P, "F": m.F, "Q": m.Q})
        pr.run()
        x_pred, P_pred = pr.out_views["x_pred"], pr.out_views["P_pred"]
        up = self._runners["update"]
        up.load({"x_pred": x_pred.reshape(m.n, 1), "P_pred": P_pred.reshape(m.n, m.n),
                 "H": m.H, "R": m.R, "z": np.reshape(z, (m.m, 1))})
        up.run()
        return (up.out_views["x"].reshape(m.n).copy(), up.out_views["P"].reshape(m.n, m.n).copy(),
                P_pred.reshape(m.n, m.n).copy())


def build_kalman_step(model: KalmanModel) -> KalmanStep:
    """Compile the covariance predict and information-form update tapes."""
    return KalmanStep(model, compile_project(model.predict_source()),
                      compile_project(model.update_source()))


# --------------------------------------------------------------------- RK4
@njit(cache=True, nogil=True)
def _stage(code, cslots, cvals, gdet, gptr, gops, empty, scratch, x_slots, t_slot, out_slots,
           x, t, k):
    for j in range(x_slots.shape[0]):
        scratch[x_slots[j]] = x[j]
    if t_slot >= 0:
        scratch[t_slot] = t
    status = execute(code, cslots, cvals, gdet, gptr, gops, empty, scratch)
    for j in range(out_slots.shape[0]):
        k[j] = scratch[out_slots[j]]
    return status


@njit(cache=True, nogil=True)
def _rk4(code, cslots, cvals, gdet, gptr, gops, scratch, x_slots, t_slot, out_slots,
         t0, h, traj, k1, k2, k3, k4, tmp):
    """Fixed-step classic RK4; returns (guard index or -1, first non-finite step or -1)."""
    empty = scratch[:0]
    n = x_slots.shape[0]
    for s in range(traj.shape[0] - 1):
        t = t0 + s * h
        x = traj[s]
        g = _stage(code, cslots, cvals, gdet, gptr, gops, empty, scratch, x_slots, t_slot,
                   out_slots, x, t, k1)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * h * k1[j]
        g = max(g, _stage(code, cslots, cvals, gdet, gptr, gops, empty, scratch, x_slots, t_slot,
                          out_slots, tmp, t + 0.5 * h, k2))
        for j in range(n):
            tmp[j] = x[j] + 0.5 * h * k2[j]
        g = max(g, _stage(code, cslots, cvals, gdet, gptr, gops, empty, scratch, x_slots, t_slot,
                          out_slots, tmp, t + 0.5 * h, k3))
        for j in range(n):
            tmp[j] = x[j] + h * k3[j]
        g = max(g, _stage(code, cslots, cvals, gdet, gptr, gops, empty, scratch, x_slots, t_slot,
                          out_slots, tmp, t + h, k4))
        if g >= 0:
            return g, s
        finite = True
        for j in range(n):
            v = x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            traj[s + 1, j] = v
            if not np.isfinite(v):
                finite = False
        if not finite:
            return -1, s + 1
    return -1, -1


@dataclass
class OdeSystem:
    """First-order system ``state' = f(state, t)`` given as a project.

    The project must declare the state input (``state``, default ``x``),
    may declare a real time input (``time``, default ``t``), and must have
    exactly one output of the state's type.  Remaining inputs are bound once
    from ``params``.
    """
    rhs: Project | str
    h: float
    steps: int
    params: dict = field(default_factory=dict)
    state: str = "x"
    time: str = "t"

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step size must be positive")
        if self.steps < 0:
            raise ValueError("step count must be non-negative")

    @property
    def discontinuous(self) -> bool:
        _, outs = analyze(self.rhs)
        return any(detect_discontinuity(e) for _, e in outs)


def integrate_rk4(sys_: OdeSystem, x0, t0: float = 0.0) -> np.ndarray:
    """Trajectory of ``steps + 1`` states (shape ``(steps + 1, *state_shape)``)."""
    project, outs = analyze(sys_.rhs)
    if any(detect_discontinuity(e) for _, e in outs):
        raise DiscontinuityError(
            "right-hand side contains delta(...): the solution jumps, so fixed-step "
            "RK4 (which assumes a smooth solution) cannot integrate it")
    types = dict(project.inputs)
    if sys_.state not in types:
        raise ValueError(f"project has no state input {sys_.state!r}")
    if len(outs) != 1 or outs[0][1].ty != types[sys_.state]:
        raise ValueError("right-hand side must have exactly one output shaped like the state")
    compiled = compile_project(project)
    tape = compiled.tape
    ports = {p.name: p for p in tape.inputs}
    x_slots = np.array(ports[sys_.state].slots, dtype=np.int64)
    t_slot = ports[sys_.time].slots[0] if sys_.time in ports else -1

    bindings = dict(sys_.params)
    bindings[sys_.state] = x0
    if t_slot >= 0:
        bindings[sys_.time] = t0
    runner = compiled.runner()
    runner.load(bindings)
    runner.scratch[:len(runner.packed)] = runner.packed

    n = len(x_slots)
    traj = np.empty((sys_.steps + 1, n))
    traj[0] = np.asarray(x0, dtype=float).reshape(-1)
    k1, k2, k3, k4, tmp = (np.empty(n) for _ in range(5))
    out_slots = np.array(tape.outputs[0].slots, dtype=np.int64)
    guard, bad = _rk4(*tape.arrays, runner.scratch, x_slots, t_slot, out_slots,
                      float(t0), float(sys_.h), traj, k1, k2, k3, k4, tmp)
    if guard >= 0:
        raise SingularMatrixError(f"singular matrix in right-hand side at step {bad}")
    if bad >= 0:
        raise NonFiniteError(f"non-finite state at step {bad}")
    shape = types[sys_.state].shape
    return traj.reshape((sys_.steps + 1, *shape))


# ---------------------------------------------------------------- benchmark
@dataclass
class BenchReport:
    project: str
    iterations: int
    tape_ns_per_iter: float
    ast_ns_per_iter: float
    speedup: float
    instruction_count: int
    allocations_per_iter: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _binding_pool(compiled: Compiled, size, seed):
    rng = np.random.default_rng(seed)
    inputs = compiled.project.inputs
    pool = [random_bindings(inputs, rng) for _ in range(size)]
    types = compiled.input_types
    packed = [pack_inputs(compiled.tape, b) for b in pool]
    envs = [{k: _to_internal(types[k], v) for k, v in b.items()} for b in pool]
    return pool, packed, envs


def _time_tape(runner, packed, n):
    mask = len(packed) - 1
    run = runner.run
    start = time.perf_counter_ns()
    for i in range(n):
        run(packed[i & mask])
    return time.perf_counter_ns() - start


def _time_ast(outputs, envs, n):
    mask = len(envs) - 1
    exprs = [e for _, e in outputs]
    evaluators = [_Evaluator(env) for env in envs]
    start = time.perf_counter_ns()
    for i in range(n):
        ev = evaluators[i & mask]
        for e in exprs:
            ev.ev(e)
    return time.perf_counter_ns() - start


def count_steady_state_allocations(runner, packed, n=20000) -> float:
    """Whole heap blocks retained per ``run`` call after warm-up."""
    mask = len(packed) - 1
    for i in range(100):
        runner.run(packed[i & mask])
    # collect first and pause the collector, so freeing unrelated garbage
    # cannot hide blocks retained by the loop
    gc.collect()
    was_enabled = gc.isenabled()
    gc.disable()
    tracemalloc.start()
    try:
        before_blocks = sys.getallocatedblocks()
        before, _ = tracemalloc.get_traced_memory()
        for i in range(n):
            runner.run(packed[i & mask])
        after, _ = tracemalloc.get_traced_memory()
        after_blocks = sys.getallocatedblocks()
    finally:
        tracemalloc.stop()
        if was_enabled:
            gc.enable()
    # a genuine per-call allocation retains at least one block per call;
    # a handful of blocks from interpreter bookkeeping rounds down to zero
    if after <= before:
        return 0.0
    return float(max(after_blocks - before_blocks, 0) // n)


def bench_compare(project, iterations: int, repetitions: int = 5, seed: int = DEFAULT_SEED,
                  name: str | None = None, pool_size: int = 64) -> BenchReport:
    """Median ns/iteration of the tape VM and of the tree interpreter.

    ``iterations`` is the total per engine, split evenly over the
    repetitions.  Bindings are generated and packed before any timing.
    """
    if iterations < 10_000:
        raise ValueError("iterations must be at least 10^4")
    if repetitions < 5:
        raise ValueError("at least 5 repetitions are required")
    compiled = project if isinstance(project, Compiled) else compile_project(project)
    _, packed, envs = _binding_pool(compiled, pool_size, seed)
    runner = compiled.runner()
    per_rep = iterations // repetitions
    _time_tape(runner, packed, 1000)  # warm-up (JIT already compiled)
    tape_ns = statistics.median(_time_tape(runner, packed, per_rep) / per_rep
                                for _ in range(repetitions))
    ast_ns = statistics.median(_time_ast(compiled.outputs, envs, per_rep) / per_rep
                               for _ in range(repetitions))
    allocs = count_steady_state_allocations(runner, packed)
    return BenchReport(
        project=name or "<project>",
        iterations=per_rep * repetitions,
        tape_ns_per_iter=round(tape_ns, 3),
        ast_ns_per_iter=round(ast_ns, 3),
        speedup=round(ast_ns / tape_ns, 3),
        instruction_count=len(compiled.tape.instrs),
        allocations_per_iter=allocs,
    )


def bench_threads(project, iterations: int, threads: int, seed: int = DEFAULT_SEED,
                  name: str | None = None):
    """Run one shared tape on ``threads`` threads, each with its own runner.

    Returns ``(reports, identical)``; ``identical`` is True when every thread
    produced bitwise-equal outputs for the whole binding pool.
    """
    if iterations < 10_000:
        raise ValueError("iterations must be at least 10^4")
    compiled = project if isinstance(project, Compiled) else compile_project(project)
    _, packed, _ = _binding_pool(compiled, 64, seed)
    results = [None] * threads
    timings = [0] * threads

    def work(k):
        runner = compiled.runner()
        outs = []
        for p in packed:
            runner.run(p)
            outs.append(runner.out_buffer.copy())
        timings[k] = _time_tape(runner, packed, iterations)
        results[k] = np.array(outs)

    pool = [threading.Thread(target=work, args=(k,)) for k in range(threads)]
    for th in pool:
        th.start()
    for th in pool:
        th.join()
    identical = all(np.array_equal(results[0].view(np.int64), r.view(np.int64)) for r in results)
    reports = [BenchReport(f"{name or '<project>'}#thread{k}", iterations,
                           round(timings[k] / iterations, 3), float("nan"), float("nan"),
                           len(compiled.tape.instrs), 0.0) for k in range(threads)]
    return reports, identical
