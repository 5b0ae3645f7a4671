"""Append-only memory log with frequency counts and neighbourhood estimates.

Memories are binary vectors, so the squared Euclidean distance between two
of them is their Hamming distance. Queries work on the distinct recorded
values and their counts, which is exact and independent of how many
duplicates the log holds.
"""

from __future__ import annotations

import io
import os
import tempfile
import threading
from collections import deque
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .errors import DomainError, ParseError
from .info import as_bits, bits_to_str

HEADER_PREFIX = "memstore v1 dim="


class MemoryRecord(NamedTuple):
    seq: int
    vector: np.ndarray


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Number of recorded memories that fix the neighbourhood radius."""

    n: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("neighbourhood size n must be a positive integer")


def _ball_size_sq(d_mem: int, radius_sq: int) -> int:
    return sum(comb(d_mem, k) for k in range(min(d_mem, radius_sq) + 1))


def lattice_ball_size(d_mem: int, radius: float) -> int:
    """Number of points of ``{0,1}^d_mem`` within Euclidean ``radius`` of any point."""
    if d_mem < 1:
        raise DomainError("d_mem must be positive")
    if radius < 0:
        raise DomainError("radius must be non-negative")
    # radius is usually the square root of an integer; absorb the rounding.
    radius_sq = int(np.floor(radius * radius + 1e-9))
    return _ball_size_sq(d_mem, radius_sq)


class MemoryStore:
    """Ordered log of memory vectors of dimension ``d_mem``.

    With ``capacity`` set, recording past capacity evicts the oldest
    record. Writers (``record``, ``prune``) serialise on an internal lock;
    concurrent readers should work on a :meth:`snapshot`.
    """

    def __init__(self, d_mem: int, capacity: int | None = None):
        if d_mem < 1:
            raise DomainError("d_mem must be positive")
        if capacity is not None and capacity < 1:
            raise DomainError("capacity must be positive")
        self.d_mem = int(d_mem)
        self.capacity = capacity
        self._log: deque[tuple[int, bytes]] = deque()
        self._counts: dict[bytes, int] = {}
        self._next_seq = 1
        self._distinct_cache = None
        self._lock = threading.Lock()

    # -- basic accessors -------------------------------------------------
    def __len__(self):
        return len(self._log)

    @property
    def total(self) -> int:
        """Number of records, N."""
        return len(self._log)

    @property
    def next_seq(self) -> int:
        return self._next_seq

    def _key(self, m) -> bytes:
        return as_bits(m, self.d_mem).tobytes()

    def _vector(self, key: bytes) -> np.ndarray:
        return np.frombuffer(key, dtype=np.uint8).copy()

    def count(self, m) -> int:
        """Occurrence count n(m)."""
        return self._counts.get(self._key(m), 0)

    def counts(self) -> dict[str, int]:
        """Count index keyed by bit string."""
        return {bits_to_str(np.frombuffer(k, dtype=np.uint8)): c for k, c in self._counts.items()}

    def records(self) -> Iterator[MemoryRecord]:
        for seq, key in self._log:
            yield MemoryRecord(seq, self._vector(key))

    def record_at(self, position: int) -> MemoryRecord:
        """Record at ``position`` in recording order (0 = oldest retained)."""
        if not 0 <= position < len(self._log):
            raise DomainError(f"position {position} out of range for {len(self._log)} records")
        seq, key = self._log[position]
        return MemoryRecord(seq, self._vector(key))

    def distinct(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct recorded values (rows, sorted) and their counts."""
        if self._distinct_cache is None:
            keys = sorted(self._counts)
            if keys:
                values = np.frombuffer(b"".join(keys), dtype=np.uint8).reshape(len(keys), self.d_mem)
            else:
                values = np.empty((0, self.d_mem), dtype=np.uint8)
            counts = np.array([self._counts[k] for k in keys], dtype=np.int64)
            self._distinct_cache = (values, counts)
        return self._distinct_cache

    def snapshot(self) -> "MemoryStore":
        other = MemoryStore(self.d_mem, self.capacity)
        with self._lock:
            other._log = deque(self._log)
            other._counts = dict(self._counts)
            other._next_seq = self._next_seq
        return other

    def __eq__(self, other):
        if not isinstance(other, MemoryStore):
            return NotImplemented
        return self.d_mem == other.d_mem and list(self._log) == list(other._log)

    __hash__ = None

    # -- mutation --------------------------------------------------------
    def record(self, m) -> int:
        """Append memory ``m``; returns its sequence number."""
        key = self._key(m)
        with self._lock:
            seq = self._next_seq
            self._next_seq += 1
            self._log.append((seq, key))
            self._counts[key] = self._counts.get(key, 0) + 1
            if self.capacity is not None:
                while len(self._log) > self.capacity:
                    self._evict_oldest()
            self._distinct_cache = None
        return seq

    def _evict_oldest(self):
        _, key = self._log.popleft()
        c = self._counts[key] - 1
        if c:
            self._counts[key] = c
        else:
            del self._counts[key]

    def prune(self, keep: int) -> None:
        """Keep only the ``keep`` most recent records."""
        if keep < 1:
            raise DomainError("keep must be at least 1")
        with self._lock:
            while len(self._log) > keep:
                self._evict_oldest()
            self._distinct_cache = None

    # -- queries ---------------------------------------------------------
    def _require_nonempty(self):
        if not self._log:
            raise DomainError("memory store is empty")

    def exact_probability(self, m) -> float:
        """n(m) / N."""
        self._require_nonempty()
        return self.count(m) / self.total

    def _distinct_sq_distances(self, m):
        values, counts = self.distinct()
        query = as_bits(m, self.d_mem)
        return _kernels.sq_distances(values, query), counts

    def neighbor_distances(self, m) -> np.ndarray:
        """Distances from ``m`` to every record (duplicates included), ascending."""
        self._require_nonempty()
        d2, counts = self._distinct_sq_distances(m)
        return np.sqrt(np.sort(np.repeat(d2, counts)).astype(np.float64))

    def neighborhood(self, m, spec: NeighborhoodSpec) -> tuple[int, int]:
        """Squared radius d_n^2 and number of records inside the closed ball."""
        if self.total < spec.n:
            raise DomainError(f"store holds {self.total} records, fewer than n={spec.n}")
        d2, counts = self._distinct_sq_distances(m)
        order = np.argsort(d2, kind="stable")
        cum = np.cumsum(counts[order])
        radius_sq = int(d2[order][np.searchsorted(cum, spec.n)])
        inside = int(counts[d2 <= radius_sq].sum())
        return radius_sq, inside

    def smoothed_probability(self, m, spec: NeighborhoodSpec = NeighborhoodSpec()) -> float:
        """Mean of n(X)/N over the lattice points X of the d_n-ball around ``m``."""
        radius_sq, inside = self.neighborhood(m, spec)
        return inside / (_ball_size_sq(self.d_mem, radius_sq) * self.total)

    # -- persistence -----------------------------------------------------
    def dumps(self) -> str:
        lines = [f"{HEADER_PREFIX}{self.d_mem}"]
        lines.extend(f"{seq}\t{bits_to_str(np.frombuffer(key, dtype=np.uint8))}" for seq, key in self._log)
        return "\n".join(lines) + "\n"

    def save(self, sink) -> None:
        """Write to a path (atomically) or to an open text stream."""
        text = self.dumps()
        if isinstance(sink, (str, os.PathLike)):
            path = Path(sink)
            fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        else:
            sink.write(text)

    @classmethod
    def loads(cls, text: str, capacity: int | None = None) -> "MemoryStore":
        if not text:
            raise ParseError("missing header", line=1)
        if not text.endswith("\n"):
            raise ParseError("file is truncated (no final newline)", line=text.count("\n") + 1)
        lines = text[:-1].split("\n")
        header = lines[0]
        if not header.startswith(HEADER_PREFIX):
            raise ParseError(f"bad header {header!r}", line=1)
        try:
            d_mem = int(header[len(HEADER_PREFIX):])
        except ValueError:
            raise ParseError(f"bad dimension in header {header!r}", line=1) from None
        if d_mem < 1:
            raise ParseError("dimension must be positive", line=1)
        log: list[tuple[int, bytes]] = []
        last_seq = 0
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected '<seq>\\t<bits>'", line=lineno)
            try:
                seq = int(parts[0])
            except ValueError:
                raise ParseError(f"bad sequence number {parts[0]!r}", line=lineno) from None
            if seq <= last_seq:
                raise ParseError("sequence numbers must be strictly increasing", line=lineno)
            bits = parts[1]
            if len(bits) != d_mem or set(bits) - {"0", "1"}:
                raise ParseError(f"expected {d_mem} binary digits, got {bits!r}", line=lineno)
            log.append((seq, as_bits(bits).tobytes()))
            last_seq = seq
        store = cls(d_mem, capacity)
        for seq, key in log:
            store._log.append((seq, key))
            store._counts[key] = store._counts.get(key, 0) + 1
        store._next_seq = last_seq + 1
        if capacity is not None and len(store._log) > capacity:
            store.prune(capacity)
        return store

    @classmethod
    def load(cls, source, capacity: int | None = None) -> "MemoryStore":
        """Read from a path or an open text stream."""
        if isinstance(source, (str, os.PathLike)):
            with open(source, encoding="utf-8", newline="") as fh:
                text = fh.read()
        elif isinstance(source, io.TextIOBase) or hasattr(source, "read"):
            text = source.read()
        else:
            raise TypeError(f"cannot load from {type(source).__name__}")
        return cls.loads(text, capacity)
