"""Synthetic event tables, seeded samplers and memory stacking."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GuardError, ParseError
from .info import ProbDist, all_bit_vectors, as_bits, bits_to_str
from .store import MemoryStore

SUITS = ("spades", "hearts", "diamonds", "clubs")
RANKS = ("A", "2", "3", "4", "5", "6", "7", "8", "9", "10", "J", "Q", "K")
MAX_TABLE_DIM = 16


@dataclass
class EventTable:
    events: np.ndarray
    dist: ProbDist
    labels: list[str] | None = None

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=np.uint8)
        if not isinstance(self.dist, ProbDist):
            self.dist = ProbDist(self.dist)
        if self.events.ndim != 2 or self.events.shape[0] != len(self.dist):
            raise DomainError("need one event row per probability")
        if np.any(self.events > 1):
            raise DomainError("events must be binary")
        if len({row.tobytes() for row in self.events}) != self.events.shape[0]:
            raise DomainError("events must be pairwise distinct")
        if self.labels is not None and len(self.labels) != self.events.shape[0]:
            raise DomainError("one label per event")

    def __len__(self):
        return self.events.shape[0]

    @property
    def dim(self) -> int:
        return self.events.shape[1]

    def index_of(self, e) -> int:
        e = as_bits(e, self.dim)
        hits = np.flatnonzero(np.all(self.events == e, axis=1))
        if hits.size == 0:
            raise DomainError(f"{bits_to_str(e)} is not an event of this table")
        return int(hits[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bits", "probability"])
        for row, p in zip(self.events, self.dist.probs):
            writer.writerow([bits_to_str(row), repr(float(p))])
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "EventTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["bits", "probability"]:
            raise ParseError("expected header 'bits,probability'", line=1)
        events, probs = [], []
        dim = None
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError("expected two columns", line=lineno)
            bits, p = row[0].strip(), row[1].strip()
            if not bits or set(bits) - {"0", "1"}:
                raise ParseError(f"bad bit string {bits!r}", line=lineno)
            if dim is None:
                dim = len(bits)
            elif len(bits) != dim:
                raise ParseError(f"expected {dim} bits, got {len(bits)}", line=lineno)
            try:
                prob = float(p)
            except ValueError:
                raise ParseError(f"bad probability {p!r}", line=lineno) from None
            events.append(as_bits(bits))
            probs.append(prob)
        if not events:
            raise ParseError("table has no rows", line=len(rows) + 1)
        try:
            return cls(np.array(events), ProbDist(np.array(probs)))
        except DomainError as exc:
            raise ParseError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "EventTable":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_csv(fh.read())


def four_state_table() -> EventTable:
    """Two bits with P = (0.6, 0.1, 0.1, 0.2) on 00, 01, 10, 11."""
    return EventTable(all_bit_vectors(2), ProbDist([0.6, 0.1, 0.1, 0.2]), ["E1", "E2", "E3", "E4"])


def playing_cards_table() -> EventTable:
    """52 equiprobable cards as 6-bit big-endian indices, suits in blocks of 13."""
    events = all_bit_vectors(6)[:52]
    labels = [f"{rank} of {suit}" for suit in SUITS for rank in RANKS]
    return EventTable(events, ProbDist.uniform(52), labels)


def suit_of(card_index: int) -> int:
    return card_index // 13


def suit_coarsening() -> np.ndarray:
    """Encode map sending each card to its suit (the 'remember only the suit' memory)."""
    return np.arange(52) // 13


def correlated_bits_table(dim: int, coupling: float, seed=None) -> EventTable:
    """All ``2**dim`` vectors; with probability ``coupling`` every bit copies one hidden fair bit.

    Otherwise the bits are independent and fair. With a ``seed`` the two
    coherent patterns are ``mask`` and ``~mask`` for a random ``mask``
    instead of all-zeros and all-ones.
    """
    if not 1 <= dim <= MAX_TABLE_DIM:
        raise GuardError(f"dim must lie in [1, {MAX_TABLE_DIM}]")
    if not 0.0 <= coupling <= 1.0:
        raise DomainError("coupling must lie in [0, 1]")
    events = all_bit_vectors(dim)
    mask = np.zeros(dim, dtype=np.uint8)
    if seed is not None:
        mask = np.random.default_rng(seed).integers(0, 2, size=dim).astype(np.uint8)
    probs = np.full(2**dim, (1.0 - coupling) / 2**dim)
    for pattern in (mask, 1 - mask):
        idx = int(bits_to_str(pattern), 2)
        probs[idx] += coupling / 2
    # renormalise away rounding so the table validates at 1e-12
    probs /= math.fsum(probs.tolist())
    return EventTable(events, ProbDist(probs))


def empirical_table(vectors) -> EventTable:
    """Event table of the distinct rows of ``vectors`` with their frequencies."""
    vectors = np.asarray(vectors, dtype=np.uint8)
    values, counts = np.unique(vectors, axis=0, return_counts=True)
    return EventTable(values, ProbDist(counts / counts.sum()))


class SampleStream:
    """Seeded i.i.d. sampler over an event table."""

    def __init__(self, table: EventTable, seed=0):
        self.table = table
        self.rng = np.random.default_rng(seed)
        self._cdf = np.cumsum(table.dist.probs)

    def sample_indices(self, count: int) -> np.ndarray:
        if count < 0:
            raise DomainError("count must be non-negative")
        u = self.rng.random(count)
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, len(self.table) - 1)

    def sample(self, count: int) -> np.ndarray:
        return self.table.events[self.sample_indices(count)]

    def get_state(self) -> dict:
        return self.rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state


def sample(stream: SampleStream, count: int) -> list[np.ndarray]:
    return list(stream.sample(count))


def stack_memories_as_input(stores: list[MemoryStore], aligned_index: int) -> np.ndarray:
    """Concatenate the ``aligned_index``-th record of each store into one input vector."""
    if not stores:
        raise DomainError("need at least one store")
    sizes = {s.total for s in stores}
    if len(sizes) != 1:
        raise DomainError(f"stores hold different record counts: {sorted(sizes)}")
    n = sizes.pop()
    if not 0 <= aligned_index < n:
        raise DomainError(f"index {aligned_index} out of range for {n} records")
    return np.concatenate([s.record_at(aligned_index).vector for s in stores])


def stack_all(stores: list[MemoryStore]) -> np.ndarray:
    """Stacked inputs for every aligned index, as rows."""
    n = stores[0].total if stores else 0
    return np.array([stack_memories_as_input(stores, i) for i in range(n)], dtype=np.uint8).reshape(n, -1)


def table_from_name_or_path(spec: str) -> EventTable:
    """Built-in table name (``four_state``, ``cards``) or a CSV path."""
    builtin = {"four_state": four_state_table, "cards": playing_cards_table}
    if spec in builtin:
        return builtin[spec]()
    if not os.path.exists(spec):
        raise DomainError(f"no such table or file: {spec!r}")
    return EventTable.load(spec)
