import math

import numpy as np
import pytest

from memcodec.codec import MlpCodec
from memcodec.datasets import SampleStream, correlated_bits_table, four_state_table
from memcodec.errors import DomainError, GuardError
from memcodec.info import all_bit_vectors, entropy
from memcodec.store import MemoryStore
from memcodec.trainer import (
    TrainConfig,
    density_surrogate,
    evaluate,
    gradient_check,
    init_state,
    lattice_normalizer,
    load_checkpoint,
    loss_and_grads,
    run_training,
    save_checkpoint,
    train_step,
)

FOUR = four_state_table()


def filled_store(d_mem, items):
    s = MemoryStore(d_mem)
    for v, k in items:
        for _ in range(k):
            s.record(v)
    return s


def random_store(d_mem, n=20, seed=1):
    s = MemoryStore(d_mem)
    for v in np.random.default_rng(seed).integers(0, 2, size=(n, d_mem)):
        s.record(v)
    return s


# -- config ---------------------------------------------------------------
@pytest.mark.parametrize(
    "kwargs",
    [
        {"learning_rate": 0.0}, {"learning_rate": 1.5}, {"alpha": -1.0}, {"surrogate_bandwidth": math.nan},
        {"memory_capacity": 0}, {"record_order": "record_then_evaluate"}, {"epochs": -1},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        TrainConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = TrainConfig(alpha=0.2, enc_hidden=(4, 3), memory_capacity=50)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(DomainError):
        TrainConfig.from_dict({"alpah": 0.1})


# -- surrogate ------------------------------------------------------------
def test_lattice_normalizer_matches_enumeration():
    for d in (1, 2, 5):
        brute = sum(math.exp(-int(np.sum(x)) / (2 * 0.4**2)) for x in all_bit_vectors(d))
        assert lattice_normalizer(0.4, d) == pytest.approx(brute, rel=1e-12)


def test_surrogate_decreases_away_from_single_memory():
    store = filled_store(3, [((1, 0, 1), 1)])
    m = np.array([1.0, 0.0, 1.0])
    direction = np.array([-1.0, 1.0, -1.0]) / math.sqrt(3)
    values = [density_surrogate(store, m + t * direction, 0.3)[0] for t in np.linspace(0, 1.5, 16)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[0] == pytest.approx(1 / lattice_normalizer(0.3, 3), rel=1e-12)


def test_surrogate_small_bandwidth_approaches_exact():
    store = filled_store(2, [((0, 0), 4), ((0, 1), 3), ((1, 0), 2), ((1, 1), 1)])
    for v in all_bit_vectors(2):
        assert abs(density_surrogate(store, v, 0.05)[0] - store.exact_probability(v)) <= 1e-3


@pytest.mark.parametrize("d", [1, 2, 3, 6])
@pytest.mark.parametrize("bandwidth", [0.1, 0.3, 1.0])
def test_surrogate_uniform_store_at_lattice_points(d, bandwidth):
    store = MemoryStore(d)
    for v in all_bit_vectors(d):
        store.record(v)
    for v in all_bit_vectors(d):
        assert abs(density_surrogate(store, v, bandwidth)[0] - 2.0**-d) <= 1e-6


def test_surrogate_gradient_matches_finite_difference():
    store = random_store(3, 30)
    a = np.array([0.3, 0.8, 0.55])
    _, g = density_surrogate(store, a, 0.3)
    h = 1e-6
    fd = [(density_surrogate(store, a + h * e, 0.3)[0] - density_surrogate(store, a - h * e, 0.3)[0]) / (2 * h)
          for e in np.eye(3)]
    np.testing.assert_allclose(g, fd, rtol=1e-6)


def test_surrogate_errors():
    with pytest.raises(DomainError):
        density_surrogate(MemoryStore(2), [0.5, 0.5], 0.3)
    with pytest.raises(DomainError):
        density_surrogate(random_store(2), [0.5, 0.5], 0.0)


# -- gradient check -------------------------------------------------------
@pytest.mark.parametrize("d_mem", [2, 3])
def test_gradient_check_seed0_codec(d_mem):
    codec = MlpCodec.initialize(4, d_mem, rng=0)
    store = random_store(d_mem)
    cfg = TrainConfig(alpha=0.1, beta=0.2, d_mem=d_mem)
    checked = 0
    for e in all_bit_vectors(4):
        try:
            report = gradient_check(codec, e, store, cfg)
        except GuardError:
            continue
        checked += 1
        assert report.max_rel_error <= 1e-3
    assert checked >= 14


def test_gradient_check_refuses_threshold_input():
    # zero input with zero biases puts every middle unit exactly on the threshold
    codec = MlpCodec.initialize(4, 3, rng=0)
    with pytest.raises(GuardError, match="threshold"):
        gradient_check(codec, (0, 0, 0, 0), random_store(3), TrainConfig(d_mem=3))


def test_gradient_check_zero_codec_is_finite():
    report = gradient_check(MlpCodec.zeros(4, 3), (1, 0, 1, 1), random_store(3), TrainConfig(d_mem=3))
    assert math.isfinite(report.max_rel_error) and report.max_rel_error <= 1e-3


def test_gradient_check_detects_corrupted_gradient():
    codec = MlpCodec.initialize(4, 3, rng=0)
    store, cfg = random_store(3), TrainConfig(alpha=0.1, d_mem=3)

    def corrupted(c, e, s, conf):
        grads = loss_and_grads(c, e, s, conf, straight=False).grads
        grads[0] = grads[0] * 1.5 + 0.01
        return grads

    assert gradient_check(codec, (1, 0, 1, 1), store, cfg, grad_fn=corrupted).max_rel_error > 0.1


# -- steps ----------------------------------------------------------------
def test_first_step_has_no_memory_term_and_records():
    codec = MlpCodec.initialize(2, 2, rng=0)
    store = MemoryStore(2)
    r = train_step(codec, (0, 1), store, TrainConfig())
    assert r.loss.memory_term == 0.0 and r.loss.reconstruction_term > 0
    assert store.total == 1 and np.array_equal(store.record_at(0).vector, r.memory)


def test_evaluate_then_record_uses_pre_update_memory():
    codec = MlpCodec.initialize(2, 2, rng=0)
    expected = codec.encode((1, 0))
    store = MemoryStore(2)
    r = train_step(codec, (1, 0), store, TrainConfig(learning_rate=1.0))
    assert np.array_equal(r.memory, expected)
    assert np.array_equal(store.record_at(0).vector, expected)


def test_store_grows_by_one_per_step():
    codec = MlpCodec.initialize(2, 2, rng=0)
    store = MemoryStore(2)
    for k, e in enumerate(SampleStream(FOUR, 0).sample(50), start=1):
        train_step(codec, e, store, TrainConfig(alpha=0.1))
        assert store.total == k


def test_rejected_step_leaves_parameters_unchanged():
    codec = MlpCodec.initialize(2, 2, rng=0)
    # with a tiny bandwidth the kernel underflows to 0 away from the single stored memory
    store = filled_store(2, [((0, 0), 1)])
    before = codec.get_flat()
    r = train_step(codec, (1, 1), store, TrainConfig(surrogate_bandwidth=1e-3))
    assert r.rejected
    assert np.array_equal(codec.get_flat(), before)
    assert store.total == 2


def test_repeated_input_reconstruction_converges():
    codec = MlpCodec.initialize(4, 3, rng=0)
    store = MemoryStore(3)
    cfg = TrainConfig(d_mem=3)
    for _ in range(500):
        r = train_step(codec, (1, 0, 1, 1), store, cfg)
    assert r.loss.reconstruction_term <= 0.05


# -- runs -----------------------------------------------------------------
SMALL = TrainConfig(beta=0.01, epochs=3, samples_per_epoch=300, surrogate_warmup=200)


def test_zero_epochs():
    state = init_state(FOUR, SMALL)
    before = state.codec.get_flat()
    report = run_training(FOUR, TrainConfig(epochs=0), state)
    assert report.epochs == [] and report.sample_losses.size == 0
    assert np.array_equal(state.codec.get_flat(), before)


def test_capacity_prunes_after_each_epoch():
    cfg = TrainConfig(epochs=3, samples_per_epoch=1000, memory_capacity=100)
    report = run_training(FOUR, cfg)
    assert [s.store_size for s in report.epochs] == [100, 100, 100]


def test_report_shape_and_oracle_row():
    report = run_training(FOUR, SMALL)
    assert [s.epoch for s in report.epochs] == [1, 2, 3]
    assert [s.store_size for s in report.epochs] == [300, 600, 900]
    assert report.sample_losses.size == 900 and np.all(report.sample_losses >= 0)
    assert report.oracle_loss == pytest.approx(1.0889, abs=5e-5)
    csv = report.epochs_csv().splitlines()
    assert csv[0].startswith("epoch,mean_loss") and len(csv) == 4
    assert "last_quarter_minus_oracle = " in report.summary()


def test_deterministic():
    a = run_training(FOUR, SMALL)
    b = run_training(FOUR, SMALL)
    assert np.array_equal(a.sample_losses, b.sample_losses)
    assert a.epochs_csv() == b.epochs_csv()


def test_resume_is_identical_to_unbroken_run(tmp_path):
    full_state = init_state(FOUR, SMALL)
    run_training(FOUR, SMALL, full_state)

    half = TrainConfig(**{**SMALL.to_dict(), "epochs": 1})
    state = init_state(FOUR, half)
    run_training(FOUR, half, state)
    save_checkpoint(state, half, tmp_path)
    resumed, _ = load_checkpoint(FOUR, tmp_path)
    run_training(FOUR, SMALL, resumed)

    assert np.array_equal(resumed.report.sample_losses, full_state.report.sample_losses)
    assert resumed.codec.dumps() == full_state.codec.dumps()
    assert resumed.store == full_state.store


def test_exact_evaluation_respects_bound():
    state = init_state(FOUR, SMALL)
    run_training(FOUR, SMALL, state)
    held_out = SampleStream(FOUR, 12345).sample(4000)
    assert evaluate(state.codec, state.store, held_out, SMALL) >= entropy(FOUR.dist) - 0.05


def test_training_on_wider_table_runs():
    table = correlated_bits_table(4, 0.5, seed=0)
    cfg = TrainConfig(epochs=1, samples_per_epoch=200, d_mem=3, alpha=0.1)
    report = run_training(table, cfg)
    assert report.epochs[0].store_size == 200 and np.all(np.isfinite(report.sample_losses))
