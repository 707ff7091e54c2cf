import numpy as np
import pytest

from modelrank import numerics, targets
from modelrank.errors import InvalidInput, NotFound


@pytest.mark.parametrize("name, rank", sorted(targets.MATRIX_RANKS.items()))
def test_matrix_ranks(name, rank):
    assert numerics.numerical_rank(targets.matrix(name)) == rank


def test_published_entries():
    assert targets.matrix("M1")[3, 0] == 7.0
    assert targets.matrix("M8")[2, 1] == 25.8
    assert targets.matrix("M2")[3, 0] == 18.0


def test_substituted_matrix_stays_close():
    m3, m5 = targets.matrix("M3"), targets.matrix("M5")
    assert np.abs(m5 - m3).max() <= 1.0
    s = numerics.singular_values(m5)
    assert s[2] / s[0] > 1e-2


def test_unknown_names():
    with pytest.raises(NotFound):
        targets.matrix("M9")
    with pytest.raises(NotFound):
        targets.sequence("seq7")
    with pytest.raises(NotFound):
        targets.spectrum_mask(8)
    with pytest.raises(NotFound):
        targets.toy_function("x3")


def test_sequences_are_orders_of_entries():
    for name in targets.SEQUENCES_TEXT:
        seq = targets.sequence(name)
        assert len({tuple(e) for e in seq}) == len(seq)
        assert seq.min() >= 0 and seq.max() <= 3
        assert len(seq) == (15 if name == "seq3" else 16)


def test_sequence_first_entry_zero_based():
    np.testing.assert_array_equal(targets.sequence("seq1")[0], [2, 0])


def test_spectrum_masks():
    for n in (7, 12, 15):
        mask = targets.spectrum_mask(n)
        assert len(mask) == n == len({tuple(e) for e in mask})


def test_parse_format_round_trip():
    text = "(1,1),(4,3),(2,4)"
    assert targets.format_entries(targets.parse_entries(text)) == text
    with pytest.raises(InvalidInput):
        targets.parse_entries("nothing here")


def test_toy_functions():
    x = np.array([[2.0, 5.0], [-1.0, 0.5]])
    np.testing.assert_array_equal(targets.toy_function("1+x1")(x), [3.0, 0.0])
    np.testing.assert_array_equal(targets.toy_function("x2")(x), [5.0, 0.5])


def test_nn_target_matches_shift_matrix():
    w1 = np.array([[0.6, 0.8, 1, 0, 0], [0, 0.6, 0.8, 1, 0], [0, 0, 0.6, 0.8, 1]])
    x = np.random.default_rng(0).standard_normal((50, 5))
    np.testing.assert_allclose(targets.nn_target_function()(x), np.tanh(x @ w1.T).sum(axis=1),
                               rtol=0, atol=1e-15)
    spec, theta = targets.nn_target_params(bias=True)
    np.testing.assert_allclose(spec.forward_batch(theta, x), np.tanh(x @ w1.T).sum(axis=1),
                               rtol=0, atol=1e-15)
