"""Weighted compression loss and its expectation on explicit distributions.

The per-sample loss is ``-(1+alpha) ln P(M) - (1+beta) ln P(E|M)``. With
``alpha = beta = 0`` its expectation is bounded below by the entropy of the
input distribution; :func:`info_gap` measures the slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import TabularCodec, conditional_likelihood, encode, decode_probs
from .errors import DomainError
from .info import as_bits, as_dist, entropy
from .store import MemoryStore, NeighborhoodSpec

PUSHFORWARD_TOL = 1e-12


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and non-negative, got {v!r}")

    @classmethod
    def parse(cls, text: str) -> "LossWeights":
        """``"a:b"`` -> ``LossWeights(a, b)``."""
        try:
            a, b = text.split(":")
            return cls(float(a), float(b))
        except ValueError:
            raise DomainError(f"bad weight pair {text!r}, expected 'alpha:beta'") from None


@dataclass(frozen=True)
class LossBreakdown:
    memory_term: float
    reconstruction_term: float

    @property
    def total(self) -> float:
        return self.memory_term + self.reconstruction_term


def _weighted_info(p: float, weight: float) -> float:
    if p < 0 or p > 1 or math.isnan(p):
        raise DomainError(f"probability out of range: {p!r}")
    if p == 0.0:
        return math.inf
    # -0.0 for p == 1 would print as "-0.0000"
    return -weight * math.log(p) + 0.0


def sample_loss(p_memory: float, p_event_given_memory: float, w: LossWeights = LossWeights()) -> LossBreakdown:
    """Weighted self-information of the memory plus weighted information lost."""
    return LossBreakdown(
        _weighted_info(p_memory, 1.0 + w.alpha),
        _weighted_info(p_event_given_memory, 1.0 + w.beta),
    )


def _check_pushforward(codec: TabularCodec, probs: np.ndarray, memory_probs: np.ndarray):
    if memory_probs.size != codec.num_memories:
        raise DomainError("memory_probs must have one entry per memory")
    for k in range(codec.num_memories):
        mass = math.fsum(probs[codec.encode_map == k].tolist())
        if abs(mass - memory_probs[k]) > PUSHFORWARD_TOL:
            raise DomainError(f"memory_probs[{k}] = {memory_probs[k]!r} but the encoder sends mass {mass!r}")


def expected_loss(codec: TabularCodec, dist, events, memory_probs, w: LossWeights = LossWeights()) -> float:
    """Expectation of :func:`sample_loss` over ``dist`` with exact memory probabilities."""
    probs = as_dist(dist).probs
    memory_probs = as_dist(memory_probs).probs
    events = np.asarray(events, dtype=np.uint8)
    if events.shape[0] != probs.size or codec.encode_map.size != probs.size:
        raise DomainError("codec, dist and events must cover the same events")
    _check_pushforward(codec, probs, memory_probs)
    terms = []
    for i, p in enumerate(probs.tolist()):
        if p == 0.0:
            continue
        k = codec.encode_map[i]
        lb = sample_loss(memory_probs[k], conditional_likelihood(codec.decode_probs[k], events[i]), w)
        terms.append(p * lb.total)
    return math.fsum(terms)


def empirical_loss(codec, store: MemoryStore, spec: NeighborhoodSpec, e, w: LossWeights = LossWeights()) -> LossBreakdown:
    """Loss of one sample with P(M) estimated from the memory store."""
    m = encode(codec, e)
    p_m = store.smoothed_probability(m, spec)
    p_e = conditional_likelihood(decode_probs(codec, m), as_bits(e))
    return sample_loss(p_m, p_e, w)


def info_gap(dist, events, codec: TabularCodec, memory_probs, w0: LossWeights = LossWeights()) -> float:
    """Expected unweighted loss minus the entropy of the input distribution."""
    if w0 != LossWeights(0.0, 0.0):
        raise DomainError("info_gap is defined for the unweighted loss only")
    return expected_loss(codec, dist, events, memory_probs, w0) - entropy(dist)
