"""Encoder/decoder pairs with a binary middle layer.

Two realisations share one interface:

* :class:`TabularCodec` - an explicit event -> memory table plus one row of
  per-node Bernoulli parameters per memory. Used for exact work on tiny
  systems.
* :class:`MlpCodec` - dense tanh layers on both sides of a quantised
  middle layer (sigmoid, then threshold at 0.5) and sigmoid outputs.

The decoder output is read as per-node probabilities that the matching
input bit is 1, so the reconstruction likelihood is a product of
Bernoulli terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, NumericError, ParseError
from .info import ProbDist, as_bits, as_dist, index_to_bits

THRESHOLD = 0.5
STE_WINDOW = 0.49
CODEC_HEADER = "mlpcodec v1"
ACTIVATION = "tanh"
SQUASH = "sigmoid"


def memory_dim(num_memories: int) -> int:
    """Bits needed to label ``num_memories`` memories (at least one)."""
    return max(1, int(num_memories - 1).bit_length())


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def conditional_likelihood(probs, e) -> float:
    """Probability of bit vector ``e`` under independent Bernoulli nodes."""
    probs = np.asarray(probs, dtype=np.float64)
    e = as_bits(e)
    if probs.shape != e.shape:
        raise DomainError(f"length mismatch: {probs.size} probabilities, {e.size} bits")
    return float(np.prod(np.where(e == 1, probs, 1.0 - probs)))


# -- quantisation ---------------------------------------------------------
class Quantized(NamedTuple):
    bits: np.ndarray
    squashed: np.ndarray
    pass_mask: np.ndarray


def quantize_with_gradient(pre_activations) -> Quantized:
    """Squash, then threshold at 0.5 (ties go to 1).

    ``pass_mask`` marks nodes whose squashed value lies within 0.49 of the
    threshold; only those pass gradient in :func:`straight_through`.
    """
    z = np.asarray(pre_activations, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite pre-activation")
    a = sigmoid(z)
    return Quantized((a >= THRESHOLD).astype(np.uint8), a, np.abs(a - THRESHOLD) < STE_WINDOW)


def straight_through(grad_bits, pass_mask):
    """Backward rule of the quantiser: d(loss)/d(squashed) from d(loss)/d(bits)."""
    return np.where(pass_mask, grad_bits, 0.0)


# -- tabular --------------------------------------------------------------
@dataclass
class TabularCodec:
    """Explicit codec over a fixed list of events.

    ``encode_map[i]`` is the memory index of event ``i``; row ``k`` of
    ``decode_probs`` holds the decoder output for memory ``k``. Memory ``k``
    is the big-endian bit vector of ``k``.
    """

    encode_map: np.ndarray
    decode_probs: np.ndarray
    events: np.ndarray | None = None

    def __post_init__(self):
        self.encode_map = np.asarray(self.encode_map, dtype=np.int64)
        self.decode_probs = np.asarray(self.decode_probs, dtype=np.float64)
        if self.decode_probs.ndim != 2:
            raise DomainError("decode_probs must be 2-d (memories x nodes)")
        k = self.decode_probs.shape[0]
        if np.any(self.encode_map < 0) or np.any(self.encode_map >= k):
            raise DomainError("encode_map entries must lie in [0, num_memories)")
        if np.any(self.decode_probs < 0) or np.any(self.decode_probs > 1):
            raise DomainError("decoder probabilities must lie in [0, 1]")
        if self.events is not None:
            self.events = np.asarray(self.events, dtype=np.uint8)
            if self.events.shape[0] != self.encode_map.size:
                raise DomainError("events and encode_map have different lengths")

    @property
    def num_memories(self) -> int:
        return self.decode_probs.shape[0]

    @property
    def d_in(self) -> int:
        return self.decode_probs.shape[1]

    @property
    def d_mem(self) -> int:
        return memory_dim(self.num_memories)

    def memory_vector(self, k: int) -> np.ndarray:
        return index_to_bits(int(k), self.d_mem)

    def memory_index(self, m) -> int:
        m = as_bits(m, self.d_mem)
        k = int("".join(map(str, m.tolist())), 2)
        if k >= self.num_memories:
            raise DomainError(f"memory {m.tolist()} is not one of the codec's memories")
        return k

    def event_index(self, e) -> int:
        if self.events is None:
            raise DomainError("codec was built without an event list")
        e = as_bits(e, self.d_in)
        hits = np.flatnonzero(np.all(self.events == e, axis=1))
        if hits.size == 0:
            raise DomainError(f"unknown event {e.tolist()}")
        return int(hits[0])

    def encode(self, e) -> np.ndarray:
        return self.memory_vector(self.encode_map[self.event_index(e)])

    def decode_probs_for(self, m) -> np.ndarray:
        return self.decode_probs[self.memory_index(m)].copy()


def optimal_tabular_decoder(encode_map, dist, events, num_memories: int | None = None) -> np.ndarray:
    """Per-memory conditional bit frequencies ``P(e_j = 1 | memory)``.

    Memories that receive no probability mass decode to 0.5 on every node.
    """
    encode_map = np.asarray(encode_map, dtype=np.int64)
    probs = as_dist(dist).probs
    events = np.asarray(events, dtype=np.float64)
    if events.shape[0] != probs.size or encode_map.size != probs.size:
        raise DomainError("encode_map, dist and events must have the same length")
    k = int(num_memories if num_memories is not None else encode_map.max() + 1)
    out = np.full((k, events.shape[1]), 0.5)
    for mem in range(k):
        sel = encode_map == mem
        mass = math.fsum(probs[sel].tolist())
        if mass > 0:
            for j in range(events.shape[1]):
                out[mem, j] = math.fsum((probs[sel] * events[sel, j]).tolist()) / mass
    return out


def pushforward(encode_map, dist, num_memories: int) -> ProbDist:
    """Distribution of memory indices induced by the encoder."""
    encode_map = np.asarray(encode_map, dtype=np.int64)
    probs = as_dist(dist).probs
    out = [math.fsum(probs[encode_map == k].tolist()) for k in range(num_memories)]
    return ProbDist(np.array(out))


def optimal_codec(encode_map, dist, events, num_memories: int | None = None) -> TabularCodec:
    encode_map = np.asarray(encode_map, dtype=np.int64)
    k = int(num_memories if num_memories is not None else encode_map.max() + 1)
    return TabularCodec(encode_map, optimal_tabular_decoder(encode_map, dist, events, k), events)


# -- MLP ------------------------------------------------------------------
def _dense_forward(layers, x, final_linear: bool):
    """Forward through dense layers; returns the cache of layer inputs and the output."""
    inputs = []
    h = x
    for i, (w, b) in enumerate(layers):
        inputs.append(h)
        z = w @ h + b
        h = z if (final_linear and i == len(layers) - 1) else np.tanh(z)
    return inputs, h


def _dense_backward(layers, inputs, grad_out):
    """Backprop through the layers of :func:`_dense_forward` (last layer linear).

    Returns per-layer ``(dW, db)`` and the gradient with respect to the input.
    """
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        x = inputs[i]
        grads[i] = (np.outer(g, x), g.copy())
        g = w.T @ g
        if i > 0:
            # inputs[i] = tanh(z_{i-1})
            g = g * (1.0 - x * x)
    return grads, g


@dataclass
class EncoderPass:
    inputs: list
    pre: np.ndarray
    quant: Quantized


@dataclass
class DecoderPass:
    inputs: list
    probs: np.ndarray


@dataclass
class MlpCodec:
    """Trainable codec: tanh hidden layers, sigmoid-thresholded middle layer."""

    encoder: list = field(default_factory=list)
    decoder: list = field(default_factory=list)

    def __post_init__(self):
        self.encoder = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)) for w, b in self.encoder]
        self.decoder = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)) for w, b in self.decoder]
        if not self.encoder or not self.decoder:
            raise DomainError("encoder and decoder need at least one layer each")
        for layers in (self.encoder, self.decoder):
            for i, (w, b) in enumerate(layers):
                if w.ndim != 2 or b.shape != (w.shape[0],):
                    raise DomainError("bad layer shapes")
                if i and w.shape[1] != layers[i - 1][0].shape[0]:
                    raise DomainError("consecutive layer widths do not match")
        if self.decoder[0][0].shape[1] != self.d_mem:
            raise DomainError("decoder input width must equal the middle layer width")
        if self.decoder[-1][0].shape[0] != self.d_in:
            raise DomainError("decoder output width must equal the input width")

    @property
    def d_in(self) -> int:
        return self.encoder[0][0].shape[1]

    @property
    def d_mem(self) -> int:
        return self.encoder[-1][0].shape[0]

    @property
    def enc_hidden(self) -> tuple:
        return tuple(w.shape[0] for w, _ in self.encoder[:-1])

    @property
    def dec_hidden(self) -> tuple:
        return tuple(w.shape[0] for w, _ in self.decoder[:-1])

    @classmethod
    def initialize(cls, d_in, d_mem, enc_hidden=(8,), dec_hidden=(8,), rng=None, scale=1.0):
        """Gaussian init with variance ``scale / fan_in``; zero biases."""
        rng = np.random.default_rng(rng)

        def make(sizes):
            return [
                (rng.normal(0.0, math.sqrt(scale / n_in), size=(n_out, n_in)), np.zeros(n_out))
                for n_in, n_out in zip(sizes[:-1], sizes[1:])
            ]

        return cls(make([d_in, *enc_hidden, d_mem]), make([d_mem, *dec_hidden, d_in]))

    @classmethod
    def zeros(cls, d_in, d_mem, enc_hidden=(8,), dec_hidden=(8,)):
        def make(sizes):
            return [(np.zeros((n_out, n_in)), np.zeros(n_out)) for n_in, n_out in zip(sizes[:-1], sizes[1:])]

        return cls(make([d_in, *enc_hidden, d_mem]), make([d_mem, *dec_hidden, d_in]))

    def copy(self) -> "MlpCodec":
        return MlpCodec([(w.copy(), b.copy()) for w, b in self.encoder], [(w.copy(), b.copy()) for w, b in self.decoder])

    # forward passes
    def encoder_pass(self, e) -> EncoderPass:
        x = as_bits(e, self.d_in).astype(np.float64)
        inputs, pre = _dense_forward(self.encoder, x, final_linear=True)
        return EncoderPass(inputs, pre, quantize_with_gradient(pre))

    def decoder_pass(self, m) -> DecoderPass:
        x = as_bits(m, self.d_mem).astype(np.float64)
        inputs, logits = _dense_forward(self.decoder, x, final_linear=True)
        return DecoderPass(inputs, sigmoid(logits))

    def encode(self, e) -> np.ndarray:
        return self.encoder_pass(e).quant.bits

    def decode_probs_for(self, m) -> np.ndarray:
        return self.decoder_pass(m).probs

    # flat parameter view, encoder first then decoder, (W, b) per layer
    def parameters(self) -> list[np.ndarray]:
        return [t for layer in (*self.encoder, *self.decoder) for t in layer]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        i = 0
        for p in self.parameters():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise DomainError("flat parameter vector has the wrong length")

    # serialisation
    def dumps(self) -> str:
        lines = [
            CODEC_HEADER,
            f"d_in={self.d_in} d_mem={self.d_mem} "
            f"enc_hidden={','.join(map(str, self.enc_hidden))} "
            f"dec_hidden={','.join(map(str, self.dec_hidden))} "
            f"activation={ACTIVATION} squash={SQUASH}",
        ]
        for side, layers in (("enc", self.encoder), ("dec", self.decoder)):
            for i, (w, b) in enumerate(layers):
                lines.append(f"layer {side}{i} {w.shape[0]} {w.shape[1]}")
                lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
                lines.append("bias " + " ".join(repr(float(v)) for v in b))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "MlpCodec":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != CODEC_HEADER:
            raise ParseError("missing 'mlpcodec v1' header", line=1)
        if len(lines) < 2:
            raise ParseError("missing size line", line=2)
        try:
            meta = dict(kv.split("=", 1) for kv in lines[1].split())
            d_in, d_mem = int(meta["d_in"]), int(meta["d_mem"])
            enc_hidden = tuple(int(v) for v in meta["enc_hidden"].split(",") if v)
            dec_hidden = tuple(int(v) for v in meta["dec_hidden"].split(",") if v)
        except (ValueError, KeyError):
            raise ParseError("bad size line", line=2) from None
        if meta.get("activation", ACTIVATION) != ACTIVATION or meta.get("squash", SQUASH) != SQUASH:
            raise ParseError("unsupported activation", line=2)
        pos = 2
        layers = {"enc": [], "dec": []}
        shapes = {
            "enc": list(zip([d_in, *enc_hidden], [*enc_hidden, d_mem])),
            "dec": list(zip([d_mem, *dec_hidden], [*dec_hidden, d_in])),
        }
        for side in ("enc", "dec"):
            for i, (n_in, n_out) in enumerate(shapes[side]):
                if pos >= len(lines) or lines[pos] != f"layer {side}{i} {n_out} {n_in}":
                    raise ParseError(f"expected 'layer {side}{i} {n_out} {n_in}'", line=pos + 1)
                pos += 1
                rows = []
                for _ in range(n_out):
                    if pos >= len(lines):
                        raise ParseError("truncated weight block", line=pos + 1)
                    rows.append(_parse_floats(lines[pos], n_in, pos + 1))
                    pos += 1
                if pos >= len(lines) or not lines[pos].startswith("bias"):
                    raise ParseError("expected bias line", line=pos + 1)
                bias = _parse_floats(lines[pos][4:], n_out, pos + 1)
                pos += 1
                layers[side].append((np.array(rows).reshape(n_out, n_in), np.array(bias)))
        if pos != len(lines):
            raise ParseError("trailing content", line=pos + 1)
        return cls(layers["enc"], layers["dec"])


def _parse_floats(line: str, count: int, lineno: int) -> list[float]:
    try:
        vals = [float(v) for v in line.split()]
    except ValueError:
        raise ParseError("non-numeric weight", line=lineno) from None
    if len(vals) != count:
        raise ParseError(f"expected {count} values, got {len(vals)}", line=lineno)
    return vals


# -- shared interface -----------------------------------------------------
def encode(codec, e) -> np.ndarray:
    """Memory vector for input ``e``."""
    return codec.encode(e)


def decode_probs(codec, m) -> np.ndarray:
    """Per-node probabilities that each input bit is 1, given memory ``m``."""
    return codec.decode_probs_for(m)
