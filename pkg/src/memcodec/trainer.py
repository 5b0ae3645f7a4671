"""One-sample-at-a-time training of :class:`MlpCodec`.

Each step evaluates the current sample against the store, takes a plain
gradient step and then records the sample's memory (evaluate-then-record).

The memory term has no gradient through the piecewise-constant smoothed
estimator, so training differentiates a Gaussian-kernel density over the
recorded memories, evaluated at the squashed (pre-threshold) middle layer.
Reported losses always use the exact smoothed estimator.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels
from .codec import MlpCodec, conditional_likelihood, straight_through, _dense_backward
from .datasets import EventTable, SampleStream
from .errors import DomainError, GuardError, NumericError, ParseError
from .loss import LossBreakdown, LossWeights, sample_loss
from .store import MemoryStore, NeighborhoodSpec

CLAMP = 1e-7
PROXIMITY = 1e-3
ORACLE_GUARD = 10**6


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.0
    beta: float = 0.0
    learning_rate: float = 0.1
    epochs: int = 20
    samples_per_epoch: int = 1000
    neighborhood_n: int = 1
    surrogate_bandwidth: float = 0.3
    surrogate_warmup: int = 0
    memory_capacity: int | None = None
    seed: int = 0
    d_mem: int = 2
    enc_hidden: tuple = (8,)
    dec_hidden: tuple = (8,)
    init_scale: float = 1.0
    record_order: str = "evaluate_then_record"

    def __post_init__(self):
        object.__setattr__(self, "enc_hidden", tuple(self.enc_hidden))
        object.__setattr__(self, "dec_hidden", tuple(self.dec_hidden))
        LossWeights(self.alpha, self.beta)
        for name in ("learning_rate", "surrogate_bandwidth", "init_scale"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise DomainError(f"{name} must be finite and positive")
        if self.learning_rate > 1:
            raise DomainError("learning_rate must not exceed 1")
        if self.surrogate_warmup < 0:
            raise DomainError("surrogate_warmup must be non-negative")
        if self.epochs < 0 or self.samples_per_epoch < 1 or self.neighborhood_n < 1 or self.d_mem < 1:
            raise DomainError("epochs >= 0, samples_per_epoch >= 1, neighborhood_n >= 1, d_mem >= 1")
        if self.memory_capacity is not None and self.memory_capacity < 1:
            raise DomainError("memory_capacity must be positive")
        if self.record_order != "evaluate_then_record":
            raise DomainError("only evaluate_then_record is supported")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta)

    @property
    def neighborhood(self) -> NeighborhoodSpec:
        return NeighborhoodSpec(self.neighborhood_n)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["enc_hidden"] = list(self.enc_hidden)
        d["dec_hidden"] = list(self.dec_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# -- density surrogate ----------------------------------------------------
def lattice_normalizer(bandwidth: float, d_mem: int) -> float:
    """Sum of the Gaussian kernel over all of ``{0,1}^d`` centred on a lattice point."""
    return (1.0 + math.exp(-1.0 / (2.0 * bandwidth * bandwidth))) ** d_mem


def density_surrogate(store: MemoryStore, activations, bandwidth: float) -> tuple[float, np.ndarray]:
    """Kernel-smoothed memory probability at ``activations`` and its gradient."""
    if store.total == 0:
        raise DomainError("memory store is empty")
    if bandwidth <= 0:
        raise DomainError("bandwidth must be positive")
    a = np.asarray(activations, dtype=np.float64)
    if a.shape != (store.d_mem,):
        raise DomainError(f"expected {store.d_mem} activations")
    values, counts = store.distinct()
    inv = 1.0 / (2.0 * bandwidth * bandwidth)
    total, grad = _kernels.gaussian_density(values.astype(np.float64), counts.astype(np.float64), a, inv)
    scale = store.total * lattice_normalizer(bandwidth, store.d_mem)
    return total / scale, grad / scale


# -- loss and gradients ---------------------------------------------------
@dataclass
class StepEval:
    surrogate: LossBreakdown
    grads: list
    memory: np.ndarray
    squashed: np.ndarray


def _reconstruction(codec: MlpCodec, m, e, weight):
    dec = codec.decoder_pass(m)
    raw = dec.probs
    probs = np.clip(raw, CLAMP, 1.0 - CLAMP)
    value = -weight * math.log(conditional_likelihood(probs, e))
    # gradient is zero where the clamp is active
    inside = (raw > CLAMP) & (raw < 1.0 - CLAMP)
    g_logits = np.where(inside, weight * (raw - e), 0.0)
    return value, dec, g_logits


def loss_and_grads(codec: MlpCodec, e, store: MemoryStore, config: TrainConfig, straight: bool = True) -> StepEval:
    """Differentiable training loss and its parameter gradients.

    With ``straight=False`` the reconstruction term sends no gradient into
    the encoder, which makes the result the exact gradient of a function
    that is smooth away from the quantisation thresholds.
    """
    e = np.asarray(e, dtype=np.uint8)
    enc = codec.encoder_pass(e)
    a, m = enc.quant.squashed, enc.quant.bits
    w = config.weights

    g_a = np.zeros(codec.d_mem)
    mem_value = 0.0
    if store.total >= max(config.neighborhood_n, config.surrogate_warmup):
        q, g_q = density_surrogate(store, a, config.surrogate_bandwidth)
        mem_value = -(1.0 + w.alpha) * math.log(q) if q > 0 else math.inf
        if math.isfinite(mem_value):
            g_a += -(1.0 + w.alpha) * g_q / q

    rec_value, dec, g_logits = _reconstruction(codec, m, e, 1.0 + w.beta)
    dec_grads, g_m = _dense_backward(codec.decoder, dec.inputs, g_logits)
    if straight:
        g_a += straight_through(g_m, enc.quant.pass_mask)
    g_pre = g_a * a * (1.0 - a)
    enc_grads, _ = _dense_backward(codec.encoder, enc.inputs, g_pre)
    grads = [g for layer in (*enc_grads, *dec_grads) for g in layer]
    return StepEval(LossBreakdown(mem_value, rec_value), grads, m, a)


def reported_loss(codec: MlpCodec, e, m, store: MemoryStore, config: TrainConfig) -> LossBreakdown:
    """Loss with the exact smoothed estimator; the memory term is 0 while N < n."""
    p_m = store.smoothed_probability(m, config.neighborhood) if store.total >= config.neighborhood_n else 1.0
    probs = np.clip(codec.decode_probs_for(m), CLAMP, 1.0 - CLAMP)
    return sample_loss(p_m, conditional_likelihood(probs, e), config.weights)


def evaluate(codec: MlpCodec, store: MemoryStore, samples, config: TrainConfig) -> float:
    """Mean reported loss over ``samples`` against a frozen codec and store (nothing recorded)."""
    total = [reported_loss(codec, e, codec.encode(e), store, config).total for e in samples]
    if not total:
        raise DomainError("no samples to evaluate")
    return math.fsum(total) / len(total)


@dataclass
class StepResult:
    loss: LossBreakdown
    memory: np.ndarray
    rejected: bool = False


def train_step(codec: MlpCodec, e, store: MemoryStore, config: TrainConfig) -> StepResult:
    """Evaluate, update ``codec`` in place, then record the memory in ``store``."""
    ev = loss_and_grads(codec, e, store, config)
    reported = reported_loss(codec, e, ev.memory, store, config)
    rejected = not (math.isfinite(ev.surrogate.total) and all(np.all(np.isfinite(g)) for g in ev.grads))
    if not rejected:
        for p, g in zip(codec.parameters(), ev.grads):
            p -= config.learning_rate * g
    store.record(ev.memory)
    return StepResult(reported, ev.memory, rejected)


# -- gradient check -------------------------------------------------------
@dataclass
class GradCheckReport:
    max_rel_error: float
    analytic: np.ndarray
    numeric: np.ndarray


def _surrogate_total(codec, e, store, config):
    return loss_and_grads(codec, e, store, config, straight=False).surrogate.total


def _exact_grads(codec, e, store, config):
    return loss_and_grads(codec, e, store, config, straight=False).grads


def gradient_check(codec: MlpCodec, e, store: MemoryStore, config: TrainConfig, h: float = 1e-4,
                   grad_fn: Callable | None = None, floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients of the training loss with central differences.

    Relative error per parameter is ``|g - g_fd| / max(|g| + |g_fd|, floor)``.
    Refuses when a middle-layer unit sits within 1e-3 of the threshold and
    flipping it would change the loss.
    """
    enc = codec.encoder_pass(e)
    near = np.flatnonzero(np.abs(enc.quant.squashed - 0.5) < PROXIMITY)
    if near.size:
        base = _reconstruction(codec, enc.quant.bits, np.asarray(e), 1.0)[0]
        for j in near:
            flipped = enc.quant.bits.copy()
            flipped[j] ^= 1
            if abs(_reconstruction(codec, flipped, np.asarray(e), 1.0)[0] - base) > 1e-12:
                raise GuardError(f"middle unit {j} is within {PROXIMITY} of the quantisation threshold")
    grad_fn = grad_fn or _exact_grads
    analytic = np.concatenate([g.ravel() for g in grad_fn(codec, e, store, config)])
    work = codec.copy()
    theta = work.get_flat()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        work.set_flat(theta)
        up = _surrogate_total(work, e, store, config)
        theta[i] = orig - h
        work.set_flat(theta)
        down = _surrogate_total(work, e, store, config)
        theta[i] = orig
        numeric[i] = (up - down) / (2.0 * h)
    work.set_flat(theta)
    if not np.all(np.isfinite(numeric)):
        raise NumericError("finite differences produced non-finite values")
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return GradCheckReport(float(rel.max()) if rel.size else 0.0, analytic, numeric)


# -- training loop --------------------------------------------------------
@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    mean_memory_term: float
    mean_reconstruction_term: float
    store_size: int
    distinct_memories: int
    rejected_steps: int


EPOCH_COLUMNS = [f.name for f in dataclasses.fields(EpochStats)]


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    sample_losses: np.ndarray = field(default_factory=lambda: np.empty(0))
    oracle_loss: float | None = None

    def quarter_means(self) -> tuple[float, float]:
        """Mean per-sample loss over the first and the last quarter of samples."""
        n = self.sample_losses.size
        q = n // 4
        if q == 0:
            return math.nan, math.nan
        return float(np.mean(self.sample_losses[:q])), float(np.mean(self.sample_losses[n - q:]))

    def epochs_csv(self) -> str:
        lines = [",".join(EPOCH_COLUMNS)]
        for s in self.epochs:
            lines.append(
                f"{s.epoch},{s.mean_loss:.4f},{s.mean_memory_term:.4f},{s.mean_reconstruction_term:.4f},"
                f"{s.store_size},{s.distinct_memories},{s.rejected_steps}"
            )
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        first, last = self.quarter_means()
        rows = [
            ("epochs", str(len(self.epochs))),
            ("samples", str(self.sample_losses.size)),
            ("first_quarter_mean_loss", f"{first:.4f}"),
            ("last_quarter_mean_loss", f"{last:.4f}"),
        ]
        if self.epochs:
            rows += [
                ("final_store_size", str(self.epochs[-1].store_size)),
                ("final_distinct_memories", str(self.epochs[-1].distinct_memories)),
            ]
        if self.oracle_loss is not None:
            rows += [
                ("oracle_loss", f"{self.oracle_loss:.4f}"),
                ("last_quarter_minus_oracle", f"{last - self.oracle_loss:.4f}"),
            ]
        return "".join(f"{k} = {v}\n" for k, v in rows)


def oracle_reference(table: EventTable, config: TrainConfig) -> float | None:
    """Oracle minimum for the run's weights when the table is small enough."""
    from .oracle import OracleProblem, solve

    k = 2**config.d_mem
    if k ** len(table) > ORACLE_GUARD:
        return None
    return solve(OracleProblem(table.events, table.dist, k, config.weights)).best_expected_loss


@dataclass
class TrainState:
    """Everything needed to continue a run bit-identically."""

    codec: MlpCodec
    store: MemoryStore
    stream: SampleStream
    report: TrainReport
    epochs_done: int = 0


def init_state(table: EventTable, config: TrainConfig) -> TrainState:
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    codec = MlpCodec.initialize(table.dim, config.d_mem, config.enc_hidden, config.dec_hidden,
                                rng=np.random.default_rng(seeds[0]), scale=config.init_scale)
    stream = SampleStream(table, np.random.default_rng(seeds[1]))
    return TrainState(codec, MemoryStore(config.d_mem), stream, TrainReport())


def run_epoch(state: TrainState, config: TrainConfig) -> EpochStats:
    batch = state.stream.sample(config.samples_per_epoch)
    losses = np.empty(len(batch))
    mem = np.empty(len(batch))
    rec = np.empty(len(batch))
    rejected = 0
    for i, e in enumerate(batch):
        r = train_step(state.codec, e, state.store, config)
        losses[i] = r.loss.total
        mem[i] = r.loss.memory_term
        rec[i] = r.loss.reconstruction_term
        rejected += r.rejected
    if config.memory_capacity is not None:
        state.store.prune(config.memory_capacity)
    state.epochs_done += 1
    state.report.sample_losses = np.concatenate([state.report.sample_losses, losses])
    stats = EpochStats(
        state.epochs_done, float(losses.mean()), float(mem.mean()), float(rec.mean()),
        state.store.total, len(state.store.distinct()[1]), rejected,
    )
    state.report.epochs.append(stats)
    return stats


def run_training(table: EventTable, config: TrainConfig, state: TrainState | None = None,
                 on_epoch: Callable | None = None) -> TrainReport:
    """Train for ``config.epochs`` epochs in total, continuing ``state`` if given."""
    state = state or init_state(table, config)
    while state.epochs_done < config.epochs:
        stats = run_epoch(state, config)
        if on_epoch is not None:
            on_epoch(state, stats)
    state.report.oracle_loss = oracle_reference(table, config)
    return state.report


# -- checkpoints ----------------------------------------------------------
def save_checkpoint(state: TrainState, config: TrainConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "codec.txt").write_text(state.codec.dumps(), encoding="utf-8")
    state.store.save(out / "store.txt")
    (out / "losses.txt").write_text("".join(f"{v!r}\n" for v in state.report.sample_losses.tolist()), encoding="utf-8")
    meta = {
        "epochs_done": state.epochs_done,
        "config": config.to_dict(),
        "rng_state": state.stream.get_state(),
        "epochs": [dataclasses.asdict(s) for s in state.report.epochs],
    }
    (out / "state.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(table: EventTable, in_dir) -> tuple[TrainState, TrainConfig]:
    src = Path(in_dir)
    try:
        meta = json.loads((src / "state.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"state.json: {exc.msg}", line=exc.lineno) from None
    config = TrainConfig.from_dict(meta["config"])
    codec = MlpCodec.loads((src / "codec.txt").read_text(encoding="utf-8"))
    store = MemoryStore.load(src / "store.txt")
    stream = SampleStream(table, 0)
    stream.set_state(meta["rng_state"])
    losses = [float(v) for v in (src / "losses.txt").read_text(encoding="utf-8").split()]
    report = TrainReport([EpochStats(**s) for s in meta["epochs"]], np.array(losses))
    return TrainState(codec, store, stream, report, int(meta["epochs_done"])), config
