"""Full pipeline: embed, cascade down to order 2, realize the order-2 boxes.

A compiled protocol for a target P runs as follows for inputs (x, y):
the order-d family D_d[P] is simulated by the round protocol on order-(d-1)
children, each of which is simulated the same way, down to order-2 boxes
that are sampled directly (``ideal-d2``) or expanded into non-local boxes
plus a shared mask bit (``nlb``). The raw outputs are finally decoded
through the embedding's block partitions.

Exact evaluation propagates the pair-state chain level by level, with the
law of every child instance computed recursively. Monte Carlo runs the same
protocol vectorized over trials; trials are grouped into fixed-size blocks
and block ``k`` of input pair ``(x, y)`` draws from the stream
``(seed, x, y, k)``, so the output depends on the seed only.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng as rngmod
from .embedding import Embedding, decode_distribution, embed
from .errors import ResourceCapError, SignalingError
from .model import ConditionalDistribution, tv_per_input
from .nlb_compile import NLBCircuit, circuit_pair_law, compile_d2, eval_circuit_vec
from .permutation import PermutationFamily, as_input
from .reduction import CascadePlan, build_child, child_distribution, plan_cascade, relabel, sim_distribution, success_bound

MODES = ("ideal-d2", "nlb")
BLOCK_SIZE = 8192
SIGMAS = 3


@dataclass(frozen=True)
class Caps:
    max_order: int = 64
    max_d2_per_trial: int = 10**6
    max_exact_laws: int = 10**6
    max_table: int = 10**7


@dataclass(frozen=True, eq=False)
class CompiledProtocol:
    source: ConditionalDistribution
    delta: Fraction
    mode: str
    embedding: Embedding
    plan: CascadePlan
    rounds: tuple[int, ...]
    levels: tuple[PermutationFamily, ...]  # orders d, d-1, ..., down to 2 (or just d if d <= 2)
    circuit: NLBCircuit | None = None
    seed: int = 0
    caps: Caps = field(default_factory=Caps)

    @property
    def order(self) -> int:
        return self.embedding.order

    @property
    def total_d2(self) -> int:
        if self.order < 2:
            return 0
        return math.prod(self.rounds)


def compile_full(
    P: ConditionalDistribution,
    delta,
    mode: str = "ideal-d2",
    *,
    seed: int = 0,
    rounds: tuple[int, ...] | None = None,
    caps: Caps = Caps(),
) -> CompiledProtocol:
    """Compile P into a protocol whose output is within ``delta`` of P.

    ``rounds`` overrides the planned round count of every cascade level
    (zero allowed); it exists for studying the protocol, not for use.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not P.report.valid:
        raise SignalingError("only normalized, nonnegative, non-signaling systems can be compiled")
    delta = rngmod.to_fraction(delta)
    if not 0 <= delta < 1:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    emb = embed(P, max_order=caps.max_order)
    d = emb.order
    plan = plan_cascade(d, delta)
    if rounds is None:
        rounds = plan.rounds()
    else:
        rounds = tuple(int(n) for n in rounds)
        if len(rounds) != len(plan.levels) or any(n < 0 for n in rounds):
            raise ValueError(f"need {len(plan.levels)} non-negative round counts, got {rounds}")
    total = math.prod(rounds) if d >= 2 else 0
    if total > caps.max_d2_per_trial:
        raise ResourceCapError(
            f"order {d} needs {total} order-2 boxes per trial, cap is {caps.max_d2_per_trial}",
            order=d, size=total, cap=caps.max_d2_per_trial,
        )
    levels = [emb.family]
    while levels[-1].d > 2:
        levels.append(build_child(levels[-1]))
    circuit = None
    if mode == "nlb" and d >= 2:
        circuit = compile_d2(levels[-1], cap=caps.max_table)
    return CompiledProtocol(P, delta, mode, emb, plan, rounds, tuple(levels), circuit, rngmod.check_seed(seed), caps)


# ---------------------------------------------------------------------------
# Exact evaluation


def _noisy(law: dict, k: int, noise: Fraction) -> dict:
    if not noise or k < 2:
        return law
    out: dict = {}
    for (a, b), p in law.items():
        out[(a, b)] = out.get((a, b), Fraction(0)) + (1 - noise) * p
        for b2 in range(k):
            if b2 != b:
                out[(a, b2)] = out.get((a, b2), Fraction(0)) + noise * p / (k - 1)
    return out


def _exact_law_count(protocol: CompiledProtocol) -> int:
    X, Y = protocol.source.x_size, protocol.source.y_size
    return X * Y * math.prod(k * k for k in range(3, protocol.order + 1))


def raw_laws(protocol: CompiledProtocol, child_noise=0) -> dict[tuple[int, int], dict]:
    """Exact law of the raw (undecoded) output pair for every input pair.

    ``child_noise`` degrades every order-2 instance: with that probability
    Bob's output is replaced by the other bit.
    """
    noise = rngmod.to_fraction(child_noise)
    count = _exact_law_count(protocol)
    if count > protocol.caps.max_exact_laws:
        raise ResourceCapError(
            f"exact evaluation needs {count} chain laws, cap is {protocol.caps.max_exact_laws}",
            order=protocol.order, size=count, cap=protocol.caps.max_exact_laws,
        )
    levels = protocol.levels
    last = len(levels) - 1
    memo: dict = {}

    def law(i: int, x: tuple, y: tuple) -> dict:
        key = (i, x, y)
        if key in memo:
            return memo[key]
        fam = levels[i]
        if fam.d == 1:
            out = {(0, 0): Fraction(1)}
        elif i == last:
            if protocol.circuit is not None:
                base = circuit_pair_law(protocol.circuit, x, y)
            else:
                base = child_distribution(fam, x, y)
            out = _noisy(base, 2, noise)
        else:
            out = sim_distribution(fam, x, y, protocol.rounds[i], child_law=lambda cx, cy: law(i + 1, cx, cy))
        memo[key] = out
        return out

    return {(x, y): law(0, (x,), (y,)) for x, y in protocol.source.inputs()}


def exact_protocol_distribution(protocol: CompiledProtocol, child_noise=0) -> ConditionalDistribution:
    """Exact decoded output law of the compiled protocol."""
    d = protocol.order
    laws = raw_laws(protocol, child_noise)
    X, Y = protocol.source.x_size, protocol.source.y_size
    zero = Fraction(0)
    probs = []
    for x in range(X):
        px = []
        for y in range(Y):
            block = [[zero] * d for _ in range(d)]
            for (a, b), p in laws[(x, y)].items():
                block[a][b] += p
            px.append(block)
        probs.append(px)
    raw = ConditionalDistribution(X, Y, d, d, probs)
    return decode_distribution(protocol.embedding, raw)


def success_probabilities(protocol: CompiledProtocol, child_noise=0) -> dict[tuple[int, int], Fraction]:
    """P(f_xy(a') = b') for the raw outputs, per input pair."""
    fam = protocol.embedding.family
    out = {}
    for (x, y), law in raw_laws(protocol, child_noise).items():
        out[(x, y)] = sum((p for (a, b), p in law.items() if fam.apply(x, y, a) == b), Fraction(0))
    return out


def top_success_bound(protocol: CompiledProtocol) -> float | None:
    """Guaranteed success of the top level given its children meet their budget."""
    if not protocol.plan.levels:
        return None
    lv = protocol.plan.levels[0]
    return float(success_bound(lv.order, protocol.rounds[0], lv.child_delta))


# ---------------------------------------------------------------------------
# Monte Carlo


def _simulate(protocol: CompiledProtocol, i: int, xs: tuple, ys: tuple, rng, n: int, noise: Fraction):
    levels = protocol.levels
    fam = levels[i]
    if fam.d == 1:
        zero = np.zeros(n, dtype=np.int64)
        return zero, zero.copy()
    if i == len(levels) - 1:
        if protocol.circuit is not None:
            xf = np.ravel_multi_index(xs, fam.x_shape)
            yf = np.ravel_multi_index(ys, fam.y_shape)
            a, b = eval_circuit_vec(protocol.circuit, xf, yf, rng)
        else:
            a = rng.integers(2, size=n)
            b = fam.apply_vec(xs, ys, a)
        if noise:
            b = b ^ rngmod.bernoulli(rng, noise, size=n)
        return a, b
    d = fam.d
    a0 = rng.integers(d, size=n)
    b0 = rng.integers(d, size=n)
    p_stay = Fraction(1, d)
    for _ in range(protocol.rounds[i]):
        stay = rngmod.bernoulli(rng, p_stay, size=n)
        a, b = _simulate(protocol, i + 1, xs + (a0,), ys + (b0,), rng, n, noise)
        a0, b0 = np.where(stay, a0, relabel(a0, d, a)), np.where(stay, b0, relabel(b0, d, b))
    return a0, b0


def simulate_block(protocol: CompiledProtocol, x: int, y: int, n: int, rng, child_noise=0) -> np.ndarray:
    """Counts of decoded outputs over ``n`` runs at (x, y), shape (A, B)."""
    noise = rngmod.to_fraction(child_noise)
    xs = (np.full(n, x, dtype=np.int64),)
    ys = (np.full(n, y, dtype=np.int64),)
    a_raw, b_raw = _simulate(protocol, 0, xs, ys, rng, n, noise)
    emb = protocol.embedding
    a = emb.alice_decode[x, a_raw]
    b = emb.bob_decode[y, b_raw]
    A, B = protocol.source.a_size, protocol.source.b_size
    return np.bincount(a * B + b, minlength=A * B).reshape(A, B)


def tv_standard_error(counts: np.ndarray, trials: int) -> float:
    """Conservative standard error of the plug-in TV estimate.

    Half the sum of per-cell binomial standard deviations; it bounds both
    the spread of the estimate and its upward bias at the true law.
    """
    p = counts.ravel() / trials
    return 0.5 * float(np.sum(np.sqrt(p * (1 - p) / trials)))


@dataclass(frozen=True)
class SimulationReport:
    shape: tuple[int, int, int, int]
    trials: int
    seed: int
    mode: str
    delta: Fraction
    child_noise: Fraction
    counts: dict  # (x, y) -> tuple of tuples of ints
    tv: dict  # (x, y) -> Fraction
    std_error: dict  # (x, y) -> float
    success_bound: float | None
    wall_clock: float = field(compare=False)

    @property
    def worst_input(self) -> tuple[int, int]:
        return max(self.tv, key=lambda k: (self.tv[k], -k[0], -k[1]))

    @property
    def worst_tv(self) -> Fraction:
        return self.tv[self.worst_input]

    def threshold(self, key) -> float:
        return float(self.delta) + SIGMAS * self.std_error[key]

    @property
    def passed(self) -> bool:
        return all(float(self.tv[k]) <= self.threshold(k) for k in self.tv)

    def empirical(self) -> ConditionalDistribution:
        X, Y, A, B = self.shape
        return ConditionalDistribution(
            X, Y, A, B,
            [[[[Fraction(c, self.trials) for c in r] for r in self.counts[(x, y)]] for y in range(Y)] for x in range(X)],
        )

    def to_dict(self, include_timing: bool = True) -> dict:
        X, Y, A, B = self.shape
        doc = {
            "kind": "simulation-report",
            "shape": {"x": X, "y": Y, "a": A, "b": B},
            "trials_per_input": self.trials,
            "seed": self.seed,
            "mode": self.mode,
            "delta": str(self.delta),
            "child_noise": str(self.child_noise),
            "sigmas": SIGMAS,
            "success_bound": self.success_bound,
            "per_input": [
                {
                    "x": x,
                    "y": y,
                    "counts": [list(r) for r in self.counts[(x, y)]],
                    "tv": str(self.tv[(x, y)]),
                    "tv_float": float(self.tv[(x, y)]),
                    "std_error": self.std_error[(x, y)],
                    "threshold": self.threshold((x, y)),
                }
                for x in range(X)
                for y in range(Y)
            ],
            "worst_input": list(self.worst_input),
            "worst_tv": str(self.worst_tv),
            "passed": self.passed,
        }
        if include_timing:
            doc["timing"] = {"wall_clock_seconds": self.wall_clock}
        return doc


def run_monte_carlo(
    protocol: CompiledProtocol,
    trials_per_input: int,
    seed: int | None = None,
    *,
    child_noise=0,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> SimulationReport:
    """Simulate every input pair ``trials_per_input`` times and compare with the target."""
    if trials_per_input < 1:
        raise ValueError("trials must be at least 1")
    seed = protocol.seed if seed is None else rngmod.check_seed(seed)
    noise = rngmod.to_fraction(child_noise)
    P = protocol.source
    start = time.perf_counter()

    tasks = []
    for x, y in P.inputs():
        for k, lo in enumerate(range(0, trials_per_input, block_size)):
            tasks.append((x, y, k, min(block_size, trials_per_input - lo)))

    def work(task):
        x, y, k, n = task
        return simulate_block(protocol, x, y, n, rngmod.stream(seed, x, y, k), noise)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    counts = {}
    for (x, y, _, _), c in zip(tasks, results):
        counts[(x, y)] = counts.get((x, y), 0) + c
    emp = ConditionalDistribution(
        *P.shape,
        [[[[Fraction(int(c), trials_per_input) for c in r] for r in counts[(x, y)]] for y in range(P.y_size)]
         for x in range(P.x_size)],
    )
    tv = tv_per_input(emp, P)
    se = {k: tv_standard_error(counts[k], trials_per_input) for k in counts}
    frozen = {k: tuple(tuple(int(v) for v in r) for r in c) for k, c in counts.items()}
    return SimulationReport(
        P.shape, trials_per_input, seed, protocol.mode, protocol.delta, noise,
        frozen, tv, se, top_success_bound(protocol), time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# Resources


def resource_report(protocol: CompiledProtocol) -> dict:
    d = protocol.order
    rounds = protocol.rounds
    total = protocol.total_d2
    biased = 0
    uses = 1
    for n in rounds:
        uses *= n
        biased += uses
    levels = [
        {
            "order": lv.order,
            "rounds": n,
            "eps": lv.eps,
            "delta": lv.delta,
            "child_delta": lv.child_delta,
        }
        for lv, n in zip(protocol.plan.levels, rounds)
    ]
    if protocol.circuit is not None:
        per_d2 = protocol.circuit.gates
        nlb_total = per_d2 * total
        estimate = False
    else:
        per_d2 = None
        nlb_total = total
        estimate = True
    return {
        "order": d,
        "mode": protocol.mode,
        "delta": str(protocol.delta),
        "levels": levels,
        "d2_per_trial": total,
        "nlb_per_d2": per_d2,
        "nlb_per_trial": nlb_total,
        "nlb_count_is_estimate": estimate,
        "shared_biased_bits_per_trial": biased,
        "shared_mask_bits_per_trial": total if protocol.circuit is not None else 0,
        "budget_slack": protocol.plan.slack,
    }
