import numpy as np
import pytest

from src.core.rng import MAX_SEED, RngStream, as_generator, as_stream, chunk_sizes, parallel_map


def test_same_seed_same_numbers():
    a = RngStream(42).generator().standard_normal(5)
    b = RngStream(42).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)


def test_children_are_independent_and_stable():
    root = RngStream(42)
    x = root.child("pairs").generator().random(4)
    y = root.child("triples").generator().random(4)
    assert not np.allclose(x, y)
    np.testing.assert_array_equal(x, RngStream(42).child("pairs").generator().random(4))


def test_spawn_paths():
    kids = RngStream(1, (3,)).spawn(3)
    assert [k.path for k in kids] == [(3, 0), (3, 1), (3, 2)]
    assert kids[0].describe() == {"seed": 1, "path": [3, 0]}


@pytest.mark.parametrize("seed", [-1, MAX_SEED + 1])
def test_seed_range(seed):
    with pytest.raises(ValueError):
        RngStream(seed)


def test_as_generator_accepts_generators():
    gen = np.random.default_rng(0)
    assert as_generator(gen) is gen
    with pytest.raises(TypeError):
        as_generator(7)


def test_parallel_map_preserves_order():
    items = list(range(50))
    assert parallel_map(lambda i: i * i, items, threads=4) == [i * i for i in items]
    assert parallel_map(lambda i: i, [], threads=4) == []


def test_parallel_results_do_not_depend_on_threads():
    streams = RngStream(9).spawn(8)

    def draw(s):
        return float(s.generator().standard_normal())

    assert parallel_map(draw, streams, threads=1) == parallel_map(draw, streams, threads=8)


def test_chunk_sizes():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert chunk_sizes(8, 4) == [4, 4]
    assert chunk_sizes(0, 4) == []


def test_as_stream_accepts_streams_and_seeds():
    stream = RngStream(3, (1,))
    assert as_stream(stream) is stream
    assert as_stream(11) == RngStream(11)
    assert as_stream(np.uint64(11)) == RngStream(11)


@pytest.mark.parametrize("bad", [np.random.default_rng(0), 1.5, True, "7"])
def test_as_stream_rejects_generators_and_non_seeds(bad):
    with pytest.raises(TypeError):
        as_stream(bad)
