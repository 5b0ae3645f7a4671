import io
import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memcodec.errors import DomainError, ParseError
from memcodec.info import all_bit_vectors, bits_to_str
from memcodec.store import MemoryStore, NeighborhoodSpec, lattice_ball_size

M1, M2, M3 = (0, 0), (0, 1), (1, 1)


def make_store(items, d_mem=2):
    s = MemoryStore(d_mem)
    for m, k in items:
        for _ in range(k):
            s.record(m)
    return s


def brute_ball(center, radius_sq):
    """Lattice points within squared radius, by enumeration."""
    pts = all_bit_vectors(len(center))
    return [p for p in pts if int(((p - np.asarray(center)) ** 2).sum()) <= radius_sq]


def brute_smoothed(records, query, n):
    """Direct reading of the neighbourhood average: mean of n(X)/N over lattice X in the d_n-ball."""
    query = np.asarray(query)
    d = sorted(math.sqrt(((np.asarray(r) - query) ** 2).sum()) for r in records)
    radius = d[n - 1]
    tally = Counter(tuple(r) for r in records)
    ball = [p for p in all_bit_vectors(len(query)) if math.sqrt(((p - query) ** 2).sum()) <= radius + 1e-12]
    return sum(tally[tuple(int(v) for v in p)] for p in ball) / (len(ball) * len(records))


def test_record_and_count():
    s = MemoryStore(2)
    s.record(M2)
    assert s.total == 1 and s.count(M2) == 1
    s.record(M2)
    assert s.count(M2) == 2


def test_record_dimension_mismatch():
    with pytest.raises(DomainError):
        MemoryStore(2).record((0, 1, 1))


def test_counts_match_tally_of_draws():
    rng = np.random.default_rng(0)
    draws = all_bit_vectors(2)[rng.choice(4, size=1000, p=[0.6, 0.1, 0.1, 0.2])]
    s = MemoryStore(2)
    for m in draws:
        s.record(m)
    assert s.counts() == dict(Counter(bits_to_str(m) for m in draws))


def test_exact_probability():
    s = make_store([(M1, 6), (M2, 4)])
    assert s.exact_probability(M1) == 0.6
    assert s.exact_probability((1, 0)) == 0.0
    values, _ = s.distinct()
    assert abs(math.fsum(s.exact_probability(v) for v in values) - 1.0) <= 1e-12


def test_exact_probability_empty():
    with pytest.raises(DomainError):
        MemoryStore(2).exact_probability(M1)


@pytest.mark.parametrize(
    "records, query, expected",
    [
        ([(0, 1)], (0, 1), [0.0]),
        ([(0, 0), (1, 1)], (0, 0), [0.0, math.sqrt(2)]),
        ([(0, 0, 0), (0, 1, 0), (1, 1, 1)], (0, 0, 0), [0.0, 1.0, math.sqrt(3)]),
    ],
)
def test_neighbor_distances(records, query, expected):
    s = MemoryStore(len(query))
    for r in records:
        s.record(r)
    assert s.neighbor_distances(query) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("d_mem, radius, expected", [(2, 0, 1), (3, 1, 4), (10, math.sqrt(2), 56)])
def test_lattice_ball_size(d_mem, radius, expected):
    assert lattice_ball_size(d_mem, radius) == expected


@pytest.mark.parametrize("d_mem", [1, 2, 3, 5])
def test_lattice_ball_size_matches_enumeration(d_mem):
    center = np.zeros(d_mem, dtype=np.uint8)
    for r2 in range(d_mem + 2):
        assert lattice_ball_size(d_mem, math.sqrt(r2)) == len(brute_ball(center, r2))
    assert lattice_ball_size(d_mem, math.sqrt(d_mem)) == 2**d_mem


def test_lattice_ball_size_monotone():
    sizes = [lattice_ball_size(6, r) for r in np.linspace(0, 3, 61)]
    assert sizes == sorted(sizes)
    assert sizes[-1] == 2**6


@pytest.mark.parametrize(
    "items, n, query, expected",
    [
        ([(M1, 6), (M2, 4)], 1, M1, 0.6),
        ([((1, 0), 10)], 1, (1, 0), 1.0),
        ([(M1, 5), (M2, 5)], 6, M1, 1 / 3),
    ],
)
def test_smoothed_probability(items, n, query, expected):
    s = make_store(items)
    assert s.smoothed_probability(query, NeighborhoodSpec(n)) == pytest.approx(expected, abs=1e-12)


def test_smoothed_probability_too_few_records():
    with pytest.raises(DomainError):
        make_store([(M1, 2)]).smoothed_probability(M1, NeighborhoodSpec(3))


def test_neighborhood_spec_validation():
    with pytest.raises(DomainError):
        NeighborhoodSpec(0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.lists(st.integers(0, 1), min_size=3, max_size=3), min_size=1, max_size=30),
    st.lists(st.integers(0, 1), min_size=3, max_size=3),
    st.integers(1, 30),
)
def test_smoothed_matches_brute_force(records, query, n):
    n = min(n, len(records))
    s = MemoryStore(3)
    for r in records:
        s.record(r)
    got = s.smoothed_probability(query, NeighborhoodSpec(n))
    assert got == pytest.approx(brute_smoothed(records, query, n), abs=1e-12)
    assert got > 0
    dists = s.neighbor_distances(query)
    assert len(dists) == len(records) and np.all(np.diff(dists) >= 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(0, 1), min_size=4, max_size=4), min_size=1, max_size=20))
def test_smoothed_equals_exact_for_recorded_query_with_n1(records):
    s = MemoryStore(4)
    for r in records:
        s.record(r)
    for r in records:
        assert s.smoothed_probability(r, NeighborhoodSpec(1)) == s.exact_probability(r)


def test_all_records_equal_query():
    s = make_store([(M3, 7)])
    for n in range(1, 8):
        assert s.smoothed_probability(M3, NeighborhoodSpec(n)) == 1.0 == s.exact_probability(M3)


def test_prune_recency():
    s = MemoryStore(2)
    vecs = [(i % 2, (i // 2) % 2) for i in range(10)]
    for v in vecs:
        s.record(v)
    s.prune(10)
    assert [r.seq for r in s.records()] == list(range(1, 11))
    s.prune(4)
    assert [r.seq for r in s.records()] == [7, 8, 9, 10]
    assert s.counts() == dict(Counter(bits_to_str(v) for v in vecs[6:]))


def test_capacity_evicts_oldest():
    s = MemoryStore(1, capacity=3)
    for bit in (0, 0, 1, 1, 1):
        s.record((bit,))
    assert [r.seq for r in s.records()] == [3, 4, 5]
    assert s.counts() == {"1": 3}


def test_random_operation_sequences_keep_counts_consistent():
    rnd = random.Random(0)
    for _ in range(10_000 // 50):
        s = MemoryStore(3)
        live = []
        for _ in range(50):
            if live and rnd.random() < 0.2:
                keep = rnd.randint(1, len(live))
                s.prune(keep)
                live = live[-keep:]
            else:
                v = tuple(rnd.randint(0, 1) for _ in range(3))
                s.record(v)
                live.append(v)
            assert s.total == len(live) == sum(s.counts().values())
        assert s.counts() == dict(Counter("".join(map(str, v)) for v in live))


def test_record_at_and_snapshot():
    s = make_store([(M1, 2), (M2, 1)])
    assert s.record_at(2).vector.tolist() == [0, 1]
    snap = s.snapshot()
    s.record(M3)
    assert snap.total == 3 and s.total == 4
    with pytest.raises(DomainError):
        s.record_at(4)


# -- persistence ----------------------------------------------------------
def test_empty_round_trip():
    s = MemoryStore(4)
    assert s.dumps() == "memstore v1 dim=4\n"
    assert MemoryStore.loads(s.dumps()) == s


def test_format_is_tab_separated():
    s = make_store([(M2, 1)])
    assert s.dumps() == "memstore v1 dim=2\n1\t01\n"


def test_large_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    s = MemoryStore(8)
    for v in rng.integers(0, 2, size=(1000, 8)):
        s.record(v)
    s.prune(900)
    path = tmp_path / "store.txt"
    s.save(path)
    t = MemoryStore.load(path)
    assert t == s
    assert [r.seq for r in t.records()] == [r.seq for r in s.records()]
    assert all(np.array_equal(a.vector, b.vector) for a, b in zip(t.records(), s.records()))
    assert t.next_seq == s.next_seq


def test_stream_round_trip():
    s = make_store([(M1, 3), (M3, 2)])
    buf = io.StringIO()
    s.save(buf)
    buf.seek(0)
    assert MemoryStore.load(buf) == s


@pytest.mark.parametrize(
    "text, line",
    [
        ("memstore v1 dim=2\n1\t01\n2\t1", 3),       # truncated, no final newline
        ("memstore v1 dim=2\n1\t01\n2\t1\n", 3),     # short bit string
        ("memstore v2 dim=2\n", 1),
        ("memstore v1 dim=2\n2\t01\n1\t10\n", 3),    # seq not increasing
        ("memstore v1 dim=2\nx\t01\n", 2),
        ("memstore v1 dim=2\n1 01\n", 2),
        ("", 1),
    ],
)
def test_malformed_files(text, line):
    with pytest.raises(ParseError) as info:
        MemoryStore.loads(text)
    assert info.value.line == line
