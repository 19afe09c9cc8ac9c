import numpy as np
import pytest

from malibo.spaces import Categorical, Continuous, Integer, SearchSpace, unit_space


def test_continuous_midpoint():
    space = SearchSpace([Continuous(0.0, 10.0)])
    assert space.encode([5.0]) == pytest.approx([0.5])


def test_categorical_one_hot():
    space = SearchSpace([Categorical(3)])
    np.testing.assert_array_equal(space.encode([1]), [0.0, 1.0, 0.0])


def test_grid_integer_index_scaling():
    # six-level doubling grid: the encoding is index / 5, checked by
    # enumerating every level independently of the encoder internals
    levels = (8, 16, 32, 64, 128, 256)
    space = SearchSpace([Integer.from_levels(levels)])
    for idx, level in enumerate(levels):
        assert space.encode([level]) == pytest.approx([idx / 5])
    assert space.encode([16]) == pytest.approx([0.2])


def test_roundtrip_discrete_exact():
    space = SearchSpace([Integer(0, 7), Categorical(4), Integer.from_levels((1, 10, 100))])
    rng = np.random.default_rng(0)
    for _ in range(200):
        raw = [int(rng.integers(0, 8)), int(rng.integers(0, 4)),
               int(rng.choice([1, 10, 100]))]
        assert space.decode(space.encode(raw)) == raw


def test_roundtrip_continuous_tolerance():
    space = SearchSpace([Continuous(-3.0, 7.0), Continuous(0.0, 1e6)])
    rng = np.random.default_rng(1)
    for _ in range(200):
        raw = [float(rng.uniform(-3, 7)), float(rng.uniform(0, 1e6))]
        decoded = space.decode(space.encode(raw))
        assert decoded[0] == pytest.approx(raw[0], abs=1e-12 * 10)
        assert decoded[1] == pytest.approx(raw[1], rel=1e-12)


def test_encode_rejects_out_of_bounds_and_arity():
    space = SearchSpace([Continuous(0.0, 1.0), Categorical(2)])
    with pytest.raises(ValueError):
        space.encode([1.5, 0])
    with pytest.raises(ValueError):
        space.encode([0.5, 5])
    with pytest.raises(ValueError):
        space.encode([0.5])


def test_dimension_invariants():
    with pytest.raises(ValueError):
        Continuous(1.0, 1.0)
    with pytest.raises(ValueError):
        Integer(5, 3)
    with pytest.raises(ValueError):
        Categorical(1)


def test_encoded_dim_counts():
    space = SearchSpace([Continuous(0, 1), Integer(0, 3), Categorical(5)])
    assert space.encoded_dim == 1 + 1 + 5


def test_snap_tie_resolves_to_lower_index():
    # levels at encoded {0, 0.5, 1}: the 0.25 midpoint must go down
    space = SearchSpace([Integer(0, 2)])
    snapped = space.snap(np.array([0.25]))
    assert snapped[0] == pytest.approx(0.0)
    assert space.decode(np.array([0.25])) == [0]
    assert space.decode(np.array([0.26])) == [1]


def test_sample_encoded_snapped_and_in_cube():
    space = SearchSpace([Continuous(0, 1), Integer(0, 4), Categorical(3)])
    pts = space.sample_encoded(np.random.default_rng(3), 500)
    assert pts.shape == (500, 5)
    assert pts.min() >= 0 and pts.max() <= 1
    # integer coordinates on the grid
    assert set(np.round(pts[:, 1] * 4).astype(int)) <= {0, 1, 2, 3, 4}
    np.testing.assert_allclose(pts[:, 1] * 4, np.round(pts[:, 1] * 4), atol=1e-12)
    # one-hot blocks
    np.testing.assert_array_equal(pts[:, 2:].sum(axis=1), np.ones(500))


def test_descriptor_roundtrip(tmp_path):
    space = SearchSpace([Continuous(-1, 4), Integer.from_levels((2, 4, 8)), Categorical(3)])
    desc = space.to_descriptor()
    clone = SearchSpace.from_descriptor(desc)
    assert clone.to_descriptor() == desc
    path = tmp_path / "space.json"
    import json

    path.write_text(json.dumps(desc))
    assert SearchSpace.from_json(path).to_descriptor() == desc


def test_unit_space():
    space = unit_space(3)
    np.testing.assert_allclose(space.encode([0.2, 0.4, 0.9]), [0.2, 0.4, 0.9])
