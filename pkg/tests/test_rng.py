import numpy as np

from rdcnn import rng


def test_splitmix64_reference_vector():
    # first outputs of the reference splitmix64.c seeded with 0
    out = rng.splitmix64(np.uint64(0), 3)
    assert [int(x) for x in out] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_uniforms_open_interval():
    u = rng.uniforms(rng.stream_state(5, 0), 100_000)
    assert 0.0 < u.min() and u.max() < 1.0


def test_streams_depend_only_on_seed_and_index():
    a = rng.standard_normal(rng.stream_state(11, 7), 9)
    _ = rng.standard_normal(rng.stream_state(11, 3), 9)
    b = rng.standard_normal(rng.stream_state(11, 7), 9)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, rng.standard_normal(rng.stream_state(11, 8), 9))


def test_odd_count_prefix_of_even():
    s = rng.stream_state(3, 2)
    np.testing.assert_array_equal(rng.standard_normal(s, 5), rng.standard_normal(s, 6)[:5])
