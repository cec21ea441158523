"""Synthetic benchmark: combining cores vs a global-lock baseline.

The workload mirrors the classic combining methodology: every worker
repeatedly invokes one operation on the shared object, then spins through
a short random amount of local work (uniform in [0, max_local_work]) so
that runs are neither lock-step nor unrealistically cache-quiet.  Reports
carry throughput plus persistence-instruction counts per operation and the
measured combining degree.

Backends: ``counted-noop`` runs real threads with persistence instructions
as counted no-ops; ``hardware`` is accepted for compatibility and behaves
as counted no-ops (no cache-line write-back intrinsics are reachable from
pure Python); ``model`` runs the deterministic single-control-flow model
with a seeded random scheduler (operation count capped for runtime
sanity), which is the backend whose counters are reproducible bit for bit.
"""

from __future__ import annotations

import os
import random
import threading
import time
from dataclasses import dataclass, field

from .combining import BlockingCombining, WaitFreeCombining
from .engine import LiveWorld, PSYNC, PFENCE, PWB, R, TAS, W, WAIT, drive_live
from .objects import ArrayStack, AtomicFloat, BoundedHeap, RingQueue, StateView
from .pmem import PMem
from .words import float_to_word

ALGOS = ("bcomb", "pbcomb", "pwfcomb", "lock-baseline")
OBJECTS = ("atomicfloat", "queue", "stack", "heap")
BACKENDS = ("counted-noop", "model", "hardware")

MODEL_OPS_CAP = 100_000


class UsageError(ValueError):
    pass


def supported(algo: str, obj: str) -> bool:
    if algo == "pwfcomb" and obj == "heap":
        return False  # copying the whole heap per attempt defeats the point
    return algo in ALGOS and obj in OBJECTS


@dataclass
class BenchConfig:
    algo: str = "pbcomb"
    object: str = "atomicfloat"
    threads: int = 4
    total_ops: int = 10_000_000
    max_local_work: int = 512
    runs: int = 10
    backend: str = "counted-noop"
    seed: int = 1
    k: float = 1.0
    heap_capacity: int = 1024
    queue_capacity: int = 4096

    def validate(self) -> None:
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.algo not in ALGOS:
            raise UsageError(f"unknown algo {self.algo!r}")
        if self.object not in OBJECTS:
            raise UsageError(f"unknown object {self.object!r}")
        if self.backend not in BACKENDS:
            raise UsageError(f"unknown backend {self.backend!r}")
        if not supported(self.algo, self.object):
            raise UsageError(f"unsupported pairing: {self.algo}+{self.object}")

    @property
    def ops_per_thread(self) -> int:
        return self.total_ops // self.threads


@dataclass
class RunStats:
    run: int
    ops: int
    seconds: float
    pwb: int
    pfence: int
    psync: int
    combining_degree: float
    final_state_word: int

    @property
    def throughput(self) -> float:
        return self.ops / self.seconds if self.seconds > 0 else 0.0

    def per_op(self, count: int) -> float:
        return count / self.ops if self.ops else 0.0


@dataclass
class BenchReport:
    config: BenchConfig
    runs: list = field(default_factory=list)

    def mean(self, getter) -> float:
        vals = [getter(r) for r in self.runs]
        return sum(vals) / len(vals) if vals else 0.0

    def summary(self) -> dict:
        return {
            "throughput": self.mean(lambda r: r.throughput),
            "pwb_per_op": self.mean(lambda r: r.per_op(r.pwb)),
            "pfence_per_op": self.mean(lambda r: r.per_op(r.pfence)),
            "psync_per_op": self.mean(lambda r: r.per_op(r.psync)),
            "combining_degree": self.mean(lambda r: r.combining_degree),
        }


def local_work(rng: random.Random, max_work: int) -> int:
    """Uniform-random dummy loop; returns the iteration count it burned."""
    if max_work <= 0:
        return 0
    u = rng.randint(0, max_work)
    acc = 0
    for i in range(u):
        acc += i & 7
    return u if acc >= 0 else -1


class LockBaseline:
    """Global test-and-set lock; every operation persists the object state
    plus one log line, with a fence and a drain.  The in-repo yardstick for
    the combining cores' amortization."""

    def __init__(self, mem: PMem, n: int, obj, *, persistence: bool = True, name: str = "lockbase"):
        self.mem = mem
        self.n = n
        self.obj = obj
        self.persistence = persistence
        self.name = name
        self.state_words = obj.state_words
        self.state_lines = -(-self.state_words // 8)
        self.state_base = mem.add_region(f"{name}.state", self.state_lines)
        self.log_base = mem.add_region(f"{name}.log", 1)
        self.lock_addr = mem.add_region(f"{name}.lock", 1, persistent=False)
        for i, w in enumerate(obj.initial_words()):
            mem.poke(self.state_base + i, w)
        for label in ("state", "log", "fence", "sync"):
            mem.register_site(f"{name}/{label}")
        self.rounds = 0
        self.served = 0

    def invoke(self, tid: int, func: int, arg: int, seq: int):
        mem = self.mem
        while True:
            won, lval = yield (TAS, self.lock_addr)
            if won:
                break
            yield (WAIT, self.lock_addr, lval)
        resp = self.obj.apply(StateView(mem, self.state_base), func, arg)
        yield (W, self.log_base, (seq << 8) | (func & 0xFF))
        if self.persistence:
            line0 = mem.line_of(self.state_base)
            for i in range(self.state_lines):
                yield (PWB, line0 + i, f"{self.name}/state")
            yield (PWB, mem.line_of(self.log_base), f"{self.name}/log")
            yield (PFENCE, f"{self.name}/fence")
            yield (PSYNC, f"{self.name}/sync")
        self.rounds += 1
        self.served += 1
        lock_now = mem.peek(self.lock_addr)
        yield (W, self.lock_addr, lock_now + 1)
        return resp

    def combining_degree(self) -> float:
        return 1.0

    def current_state_words(self):
        return self.mem.vol[self.state_base:self.state_base + self.state_words]


def _make_object(config: BenchConfig):
    if config.object == "atomicfloat":
        return AtomicFloat(1.0)
    if config.object == "queue":
        return RingQueue(config.queue_capacity)
    if config.object == "stack":
        return ArrayStack(config.queue_capacity)
    return BoundedHeap(config.heap_capacity)


def _make_instance(config: BenchConfig, mem: PMem):
    obj = _make_object(config)
    if config.algo == "bcomb":
        return BlockingCombining(mem, config.threads, obj, persistence=False)
    if config.algo == "pbcomb":
        return BlockingCombining(mem, config.threads, obj, persistence=True)
    if config.algo == "pwfcomb":
        return WaitFreeCombining(mem, config.threads, obj, persistence=True)
    return LockBaseline(mem, config.threads, obj, persistence=True)


def _op_for(config: BenchConfig, obj, tid: int, i: int, rng: random.Random):
    if config.object == "atomicfloat":
        return (AtomicFloat.MUL, float_to_word(config.k))
    if config.object == "queue":
        return (RingQueue.ENQ, tid * 1_000_000 + i) if i % 2 == 0 else (RingQueue.DEQ, 0)
    if config.object == "stack":
        return (ArrayStack.PUSH, tid * 1_000_000 + i) if i % 2 == 0 else (ArrayStack.POP, 0)
    if i % 2 == 0:
        return (BoundedHeap.INSERT, rng.randrange(1 << 20))
    return (BoundedHeap.DELETE_MIN, 0)


def _pin_to_core(worker_index: int) -> None:
    # round-robin over available cores; best effort only
    try:
        cores = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cores[worker_index % len(cores)]})
    except (AttributeError, OSError):
        pass


def _run_live(config: BenchConfig, run_index: int) -> RunStats:
    mem = PMem(n_threads=config.threads, mode="live")
    inst = _make_instance(config, mem)
    world = LiveWorld(mem)
    ops_per_thread = config.ops_per_thread
    barrier = threading.Barrier(config.threads + 1)

    def worker(tid: int) -> None:
        _pin_to_core(tid)
        rng = random.Random((config.seed, run_index, tid).__hash__())
        barrier.wait()
        for i in range(ops_per_thread):
            func, arg = _op_for(config, inst.obj, tid, i, rng)
            drive_live(world, tid, inst.invoke(tid, func, arg, i + 1))
            local_work(rng, config.max_local_work)

    threads = [threading.Thread(target=worker, args=(t,)) for t in range(config.threads)]
    for th in threads:
        th.start()
    barrier.wait()
    t0 = time.perf_counter()
    for th in threads:
        th.join()
    elapsed = time.perf_counter() - t0
    stats = mem.stats()
    ops = ops_per_thread * config.threads
    try:
        degree = inst.combining_degree()
    except ValueError:
        degree = 0.0
    return RunStats(
        run=run_index,
        ops=ops,
        seconds=elapsed,
        pwb=stats.pwb,
        pfence=stats.pfence,
        psync=stats.psync,
        combining_degree=degree,
        final_state_word=inst.current_state_words()[0],
    )


def _run_model(config: BenchConfig, run_index: int) -> RunStats:
    from .harness.scheduler import Program, RandomScheduler, run as run_program

    total = min(config.total_ops, MODEL_OPS_CAP)
    ops_per_thread = max(1, total // config.threads)

    class _Target:
        def __init__(self):
            self.mem = PMem(n_threads=config.threads, mode="model")
            self.inst = _make_instance(config, self.mem)

        def invoke_gen(self, tid, op, arg, seq):
            return self.inst.invoke(tid, op, arg, seq)

        def recover_gen(self, tid, op, arg, seq):
            raise NotImplementedError("bench runs are crash-free")

        def on_crash(self):
            raise NotImplementedError

    rngs = [random.Random((config.seed, run_index, t).__hash__()) for t in range(config.threads)]
    scripts = [
        [_op_for(config, None, t, i, rngs[t]) for i in range(ops_per_thread)]
        for t in range(config.threads)
    ]
    program = Program(make_target=_Target, scripts=scripts, name="bench")
    t0 = time.perf_counter()
    result = run_program(
        program,
        RandomScheduler(config.seed * 1_000_003 + run_index),
        max_steps=200_000_000,
    )
    elapsed = time.perf_counter() - t0
    inst = result.target.inst
    stats = result.target.mem.stats()
    ops = ops_per_thread * config.threads
    try:
        degree = inst.combining_degree()
    except ValueError:
        degree = 0.0
    return RunStats(
        run=run_index,
        ops=ops,
        seconds=elapsed,
        pwb=stats.pwb,
        pfence=stats.pfence,
        psync=stats.psync,
        combining_degree=degree,
        final_state_word=inst.current_state_words()[0],
    )


def run_bench(config: BenchConfig) -> BenchReport:
    config.validate()
    report = BenchReport(config=config)
    for run_index in range(config.runs):
        if config.backend == "model":
            report.runs.append(_run_model(config, run_index))
        else:
            report.runs.append(_run_live(config, run_index))
    return report


def emit_csv(report: BenchReport) -> str:
    cfg = report.config
    lines = ["algo,object,threads,run,throughput,pwb_per_op,pfence_per_op,psync_per_op,combining_degree"]
    for r in report.runs:
        lines.append(
            f"{cfg.algo},{cfg.object},{cfg.threads},{r.run},"
            f"{r.throughput:.6g},{r.per_op(r.pwb):.6g},{r.per_op(r.pfence):.6g},"
            f"{r.per_op(r.psync):.6g},{r.combining_degree:.6g}"
        )
    return "\n".join(lines) + "\n"


def write_csv(report: BenchReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(emit_csv(report))


def parse_csv(text: str) -> list[dict]:
    lines = text.strip().split("\n")
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        row = dict(zip(header, cells))
        for key in ("throughput", "pwb_per_op", "pfence_per_op", "psync_per_op", "combining_degree"):
            row[key] = float(row[key])
        for key in ("threads", "run"):
            row[key] = int(row[key])
        out.append(row)
    return out
