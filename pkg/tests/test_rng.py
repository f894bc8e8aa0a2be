import numpy as np
import pytest

from measprep import kernels
from measprep.rng import (
    RandomStream,
    draw_uint64,
    draw_uniform,
    draw_uniform_array,
    mix64,
    stream_key,
    stream_keys,
)

# published SplitMix64 outputs for seed 1234567
SPLITMIX_1234567 = [
    6457827717110365317,
    3203168211198807973,
    9817491932198370423,
    4593380528125082431,
    16408922859458223821,
]


def test_splitmix64_reference_vectors():
    assert [draw_uint64(1234567, c) for c in range(5)] == SPLITMIX_1234567


def test_stream_is_sequential_view():
    s = RandomStream(1234567)
    assert [s.uniform() for _ in range(5)] == [(v >> 11) * 2.0 ** -53 for v in SPLITMIX_1234567]
    assert s.counter == 5


def test_keys_numpy_matches_python():
    keys = stream_keys(42, 100, start=7)
    assert [int(k) for k in keys] == [stream_key(42, i) for i in range(7, 107)]
    assert int(stream_keys(42, 1)[0]) == stream_key(42, 0)


def test_uniform_numpy_matches_python():
    keys = stream_keys(5, 50)
    counters = np.arange(50) * 3
    arr = draw_uniform_array(keys, counters)
    assert arr.tolist() == [draw_uniform(int(k), int(c)) for k, c in zip(keys, counters)]
    assert np.all((arr >= 0) & (arr < 1))


def test_mix64_is_a_bijection_on_samples():
    vals = {mix64(i) for i in range(10_000)}
    assert len(vals) == 10_000


def test_distinct_streams_are_uncorrelated():
    a = np.array([draw_uniform(stream_key(0, 0), c) for c in range(20_000)])
    b = np.array([draw_uniform(stream_key(0, 1), c) for c in range(20_000)])
    assert abs(a.mean() - 0.5) < 4 * (1 / np.sqrt(12 * 20_000))
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(20_000)


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")
def test_numba_uniform_matches_python():
    keys = stream_keys(9, 20)
    for k in keys:
        for c in (0, 1, 17, 2**40):
            assert kernels._uniform_nb(k, np.int64(c)) == draw_uniform(int(k), c)
