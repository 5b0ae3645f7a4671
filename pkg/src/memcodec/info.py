"""Information measures on explicit finite distributions.

All logarithms are natural, so every quantity is in nats. Sums run in
ascending event order through :func:`math.fsum`, which is exactly rounded
and therefore independent of the order of the terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SUM_TOL = 1e-12
CONSERVATION_TOL = 1e-12


@dataclass(frozen=True)
class ProbDist:
    """Finite probability distribution indexed by event id."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64).ravel()
        if p.size == 0:
            raise DomainError("empty distribution")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DomainError("probabilities must be finite and non-negative")
        total = math.fsum(p.tolist())
        if abs(total - 1.0) > SUM_TOL:
            raise DomainError(f"probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    def __eq__(self, other):
        if not isinstance(other, ProbDist):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None

    @classmethod
    def uniform(cls, n: int) -> "ProbDist":
        return cls(np.full(n, 1.0 / n))


def as_dist(d) -> ProbDist:
    return d if isinstance(d, ProbDist) else ProbDist(d)


def as_bits(x, dim: int | None = None) -> np.ndarray:
    """Validate ``x`` as a binary vector and return it as a uint8 array.

    Accepts sequences of 0/1 or strings such as ``"0110"``.
    """
    if isinstance(x, str):
        if not x or set(x) - {"0", "1"}:
            raise DomainError(f"not a bit string: {x!r}")
        bits = np.frombuffer(x.encode("ascii"), dtype=np.uint8) - ord("0")
    else:
        arr = np.asarray(x)
        if arr.ndim != 1 or arr.size == 0:
            raise DomainError("bit vector must be a non-empty 1-d sequence")
        if not np.all((arr == 0) | (arr == 1)):
            raise DomainError(f"bit vector has non-binary entries: {arr!r}")
        bits = arr.astype(np.uint8)
    if dim is not None and bits.size != dim:
        raise DomainError(f"expected dimension {dim}, got {bits.size}")
    return bits


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in bits)


def index_to_bits(index: int, dim: int) -> np.ndarray:
    """Big-endian binary expansion of ``index`` on ``dim`` bits."""
    if not 0 <= index < 2**dim:
        raise DomainError(f"index {index} does not fit in {dim} bits")
    return np.array([(index >> (dim - 1 - j)) & 1 for j in range(dim)], dtype=np.uint8)


def all_bit_vectors(dim: int) -> np.ndarray:
    """Every vector of ``{0,1}^dim`` as rows, in big-endian index order."""
    idx = np.arange(2**dim, dtype=np.int64)
    shifts = np.arange(dim - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def _check_probability(p, name="p"):
    if not (0.0 < p <= 1.0):
        raise DomainError(f"{name} must lie in (0, 1], got {p!r}")


def self_information(p: float) -> float:
    _check_probability(p)
    return -math.log(p)


def entropy(d) -> float:
    d = as_dist(d)
    return math.fsum(-p * math.log(p) for p in d.probs.tolist() if p > 0.0)


def max_entropy(num_events: int) -> float:
    if num_events < 1:
        raise DomainError("num_events must be at least 1")
    return math.log(num_events)


def redundancy(d) -> float:
    d = as_dist(d)
    return max_entropy(len(d)) - entropy(d)


def cross_entropy(p, q) -> float:
    """``-sum p_i ln q_i``; ``inf`` when ``q`` misses part of the support of ``p``."""
    p, q = as_dist(p), as_dist(q)
    if len(p) != len(q):
        raise DomainError("distributions have different support sizes")
    terms = []
    for pi, qi in zip(p.probs.tolist(), q.probs.tolist()):
        if pi == 0.0:
            continue
        if qi == 0.0:
            return math.inf
        terms.append(-pi * math.log(qi))
    return math.fsum(terms)


def conservation_check(p_event: float, p_memory: float, p_event_given_memory: float) -> float:
    """Residual ``|I(E) - (I(M) + L)|`` for a factorised event probability."""
    _check_probability(p_event, "p_event")
    _check_probability(p_memory, "p_memory")
    _check_probability(p_event_given_memory, "p_event_given_memory")
    if abs(p_event - p_memory * p_event_given_memory) > CONSERVATION_TOL:
        raise DomainError("p_event != p_memory * p_event_given_memory")
    info_e = self_information(p_event)
    info_m = self_information(p_memory)
    lost = self_information(p_event_given_memory)
    return abs(info_e - (info_m + lost))
