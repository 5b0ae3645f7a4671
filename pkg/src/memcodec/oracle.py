"""Exact minimisation of the expected weighted loss on tiny systems.

Every total map from events to memories is enumerated; each gets its
optimal decoder (conditional bit frequencies) and exact memory
probabilities. The minimum is reduced deterministically: smallest loss,
with losses within ``TIE_TOL`` treated as equal and the lexicographically
smallest map winning.
"""

from __future__ import annotations

import csv
import io
import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import _kernels
from .codec import TabularCodec, optimal_codec, pushforward
from .errors import DomainError, GuardError
from .info import as_dist, entropy
from .loss import LossWeights, expected_loss

MAX_ENCODINGS = 10**8
TIE_TOL = 1e-12
CHUNK = 1 << 16
THREADS_ENV = "MEMCODEC_THREADS"


@dataclass
class OracleProblem:
    events: np.ndarray
    dist: object
    num_memories: int
    weights: LossWeights = LossWeights()

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=np.uint8)
        self.dist = as_dist(self.dist)
        if self.events.ndim != 2 or self.events.shape[0] != len(self.dist):
            raise DomainError("need one event row per probability")
        if self.num_memories < 1:
            raise DomainError("num_memories must be positive")

    @property
    def num_events(self) -> int:
        return self.events.shape[0]

    @property
    def search_size(self) -> int:
        return self.num_memories**self.num_events


@dataclass
class OracleSolution:
    best_codec: TabularCodec
    best_expected_loss: float
    argmin_count: int

    @property
    def partition(self) -> list[list[int]]:
        return partition_of(self.best_codec.encode_map)


def canonical_map(encode_map) -> tuple:
    """Relabel memories in order of first use, so relabelings compare equal."""
    labels: dict[int, int] = {}
    return tuple(labels.setdefault(int(k), len(labels)) for k in encode_map)


def partition_of(encode_map) -> list[list[int]]:
    """Groups of event indices sharing a memory, ordered by first event."""
    groups: dict[int, list[int]] = {}
    for i, k in enumerate(encode_map):
        groups.setdefault(int(k), []).append(i)
    return list(groups.values())


def format_partition(encode_map, labels=None) -> str:
    """e.g. ``"E1,E2|E3,E4"``."""
    names = labels or [f"E{i + 1}" for i in range(len(encode_map))]
    return "|".join(",".join(names[i] for i in g) for g in partition_of(encode_map))


def _check_guard(problem: OracleProblem):
    if problem.search_size > MAX_ENCODINGS:
        raise GuardError(
            f"{problem.num_memories}^{problem.num_events} encodings exceeds the guard of {MAX_ENCODINGS:.0e}"
        )


def enumerate_encodings(problem: OracleProblem) -> Iterator[tuple[int, ...]]:
    """Every map event -> memory, lexicographically ordered."""
    _check_guard(problem)
    return itertools.product(range(problem.num_memories), repeat=problem.num_events)


def _maps_at(indices, k: int, n: int) -> np.ndarray:
    """Encode maps at the given positions of the lexicographic enumeration."""
    idx = np.asarray(indices, dtype=np.int64)
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % k


def _maps_block(start: int, stop: int, k: int, n: int) -> np.ndarray:
    return _maps_at(np.arange(start, stop), k, n)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def all_losses(problem: OracleProblem) -> np.ndarray:
    """Expected loss of every encode map with its optimal decoder, in enumeration order."""
    _check_guard(problem)
    k, n, total = problem.num_memories, problem.num_events, problem.search_size
    probs = problem.dist.probs
    w = problem.weights
    out = np.empty(total)

    def work(start):
        stop = min(start + CHUNK, total)
        out[start:stop] = _kernels.evaluate_encodings(
            _maps_block(start, stop, k, n), problem.events, probs, k, w.alpha, w.beta
        )

    starts = range(0, total, CHUNK)
    threads = _thread_count()
    if threads == 1 or total <= CHUNK:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    return out


def _select(losses: np.ndarray, problem: OracleProblem) -> tuple[int, int]:
    """Index of the winning map, and the number of tied maps up to relabeling."""
    tied = np.flatnonzero(losses <= losses.min() + TIE_TOL)
    classes = set()
    for s in range(0, tied.size, CHUNK):
        maps = _maps_at(tied[s:s + CHUNK], problem.num_memories, problem.num_events)
        classes.update(canonical_map(row) for row in maps)
    return int(tied[0]), len(classes)


def solve(problem: OracleProblem) -> OracleSolution:
    """Minimum expected weighted loss over all encoders with optimal decoders."""
    losses = all_losses(problem)
    winner, count = _select(losses, problem)
    encode_map = _maps_block(winner, winner + 1, problem.num_memories, problem.num_events)[0]
    codec = optimal_codec(encode_map, problem.dist, problem.events, problem.num_memories)
    memory_probs = pushforward(encode_map, problem.dist, problem.num_memories)
    value = expected_loss(codec, problem.dist, problem.events, memory_probs, problem.weights)
    return OracleSolution(codec, value, count)


def expected_self_information(dist) -> float:
    """Expected self-information of the input, the lower bound for the unweighted loss."""
    return entropy(dist)


# -- grid-decoder cross-check --------------------------------------------
def _grid_decoder(encode_map, probs, events, k, weight, grid):
    """Best decoder on ``grid`` for each memory and node, and its loss contribution.

    The objective separates over (memory, node) pairs, so a per-node scan
    covers the full product grid exactly.
    """
    d = events.shape[1]
    dec = np.full((k, d), 0.5)
    total = 0.0
    with np.errstate(divide="ignore"):
        log_g, log_1g = np.log(grid), np.log1p(-grid)
    safe_g, safe_1g = np.where(np.isfinite(log_g), log_g, 0.0), np.where(np.isfinite(log_1g), log_1g, 0.0)
    for mem in range(k):
        sel = encode_map == mem
        if not probs[sel].sum() > 0:
            continue
        for j in range(d):
            ones = probs[sel][events[sel, j] == 1].sum()
            zeros = probs[sel][events[sel, j] == 0].sum()
            # 0 * log 0 contributes 0
            cost = -(ones * safe_g + zeros * safe_1g)
            if ones > 0:
                cost[0] = np.inf
            if zeros > 0:
                cost[-1] = np.inf
            best = int(np.argmin(cost))
            dec[mem, j] = grid[best]
            total += weight * cost[best]
    return dec, total


def solve_with_grid_decoder(problem: OracleProblem, grid_step: float = 1e-3) -> OracleSolution:
    """Like :func:`solve` but with decoders found by exhaustive grid search."""
    if problem.events.shape[1] > 3:
        raise GuardError("grid decoder search supports at most 3 input bits")
    if grid_step < 1e-3 or grid_step > 1:
        raise GuardError("grid_step must lie in [1e-3, 1]")
    _check_guard(problem)
    steps = int(round(1.0 / grid_step))
    grid = np.linspace(0.0, 1.0, steps + 1)
    probs = problem.dist.probs
    k = problem.num_memories
    w = problem.weights
    losses, decoders = [], []
    live = probs > 0
    for encode_map in enumerate_encodings(problem):
        encode_map = np.array(encode_map)
        pm = np.array([probs[encode_map == m].sum() for m in range(k)])
        mem_term = -(1.0 + w.alpha) * float(np.dot(probs[live], np.log(pm[encode_map[live]])))
        dec, rec_term = _grid_decoder(encode_map, probs, problem.events, k, 1.0 + w.beta, grid)
        losses.append(mem_term + rec_term)
        decoders.append(dec)
    losses = np.array(losses)
    winner, count = _select(losses, problem)
    encode_map = _maps_at([winner], k, problem.num_events)[0]
    codec = TabularCodec(encode_map, decoders[winner], problem.events)
    return OracleSolution(codec, float(losses[winner]), count)


# -- result table ---------------------------------------------------------
ORACLE_COLUMNS = ["alpha", "beta", "min_loss", "partition", "encode_map", "decoder", "argmin_count"]


def oracle_rows(events, dist, weights_list, num_memories=None, labels=None) -> list[dict]:
    events = np.asarray(events, dtype=np.uint8)
    k = num_memories or events.shape[0]
    rows = []
    for w in weights_list:
        sol = solve(OracleProblem(events, dist, k, w))
        used = sorted(set(sol.best_codec.encode_map.tolist()))
        decoder = ";".join(
            f"M{m + 1}=(" + ",".join(f"{p:.4f}" for p in sol.best_codec.decode_probs[m]) + ")" for m in used
        )
        rows.append({
            "alpha": f"{w.alpha:g}",
            "beta": f"{w.beta:g}",
            "min_loss": f"{sol.best_expected_loss:.4f}",
            "partition": format_partition(sol.best_codec.encode_map, labels),
            "encode_map": " ".join(str(int(m) + 1) for m in sol.best_codec.encode_map),
            "decoder": decoder,
            "argmin_count": str(sol.argmin_count),
        })
    return rows


def rows_to_csv(rows, columns=ORACLE_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
