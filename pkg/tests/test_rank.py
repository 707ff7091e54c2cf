import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modelrank import models, numerics, targets
from modelrank.errors import InvalidInput, NotFound, NumericalWarning, PreconditionViolated
from modelrank.models import Cnn1d, Cnn2d, DeepFc, Fc2, MatFac, ToyLinear, ToyNL
from modelrank.rank import (
    CnnTarget, Dataset, Fc2Target, MatFacTarget, ToyTarget, closed_form_rank,
    deep_rank_upper_bound, empirical_rank, is_linearly_stable, minimal_rank_factorization,
    model_rank_numeric, prefix_ranks, rank_report, stability_onset, stratify, tangent_matrix,
)


def matfac_point(d, r, rng):
    a = np.zeros((d, d))
    b = np.zeros((d, d))
    a[:, :r] = rng.standard_normal((d, r))
    b[:r] = rng.standard_normal((r, d))
    return MatFac(d).pack(a, b)


def fc2_point(spec, k, rng):
    theta = rng.standard_normal(spec.param_count())
    p = spec.unpack(theta)
    p["a"][k:] = 0
    p["W"][k:] = 0
    if spec.bias:
        p["b"][k:] = 0
    return theta


def cnn_point(spec, k, m_null, rng):
    theta = rng.standard_normal(spec.param_count())
    p = spec.unpack(theta)
    for block in p.values():
        block[k:] = 0
    flat = p["a"][:k].reshape(-1)
    flat[:m_null] = 0
    p["a"][:k] = flat.reshape(p["a"][:k].shape)
    return theta


def toy_data(n, seed=0):
    x = np.random.default_rng(seed).standard_normal((n, 2))
    return Dataset(x, 1 + x[:, 0])


# -- tangent matrix and empirical rank ---------------------------------------

def test_tangent_matrix_toynl():
    t = tangent_matrix(ToyNL(), [1, 1, 0, 0], toy_data(2))
    assert t.shape == (4, 2)
    np.testing.assert_array_equal(t[2:], 0)


def test_tangent_matrix_single_column():
    spec = Fc2(3, 2, bias=True)
    theta = np.random.default_rng(0).standard_normal(spec.param_count())
    x = np.array([[0.1, -0.4, 2.0]])
    t = tangent_matrix(spec, theta, Dataset(x, [0.0]))
    np.testing.assert_array_equal(t[:, 0], models.grad_param(spec, theta, x[0]))


def test_tangent_matrix_full_matfac():
    spec, theta = minimal_rank_factorization(targets.matrix("M2"))
    entries = spec.all_entries()
    t = tangent_matrix(spec, theta, entries)
    assert t.shape == (32, 16)
    assert numerics.numerical_rank(t) == 7


def test_empirical_rank_toynl():
    assert empirical_rank(ToyNL(), [1, 1, 0, 0], toy_data(2)) == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10 ** 6))
def test_empirical_rank_bounded_by_n(n, seed):
    spec = Fc2(3, 2)
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(spec.param_count())
    assert empirical_rank(spec, theta, spec.sample_inputs(n, rng)) <= n


def test_empirical_rank_rank_one_all_entries():
    spec = MatFac(4)
    theta = matfac_point(4, 1, np.random.default_rng(1))
    assert empirical_rank(spec, theta, spec.all_entries()) == 7


# -- model rank --------------------------------------------------------------

def test_model_rank_toynl_generic():
    assert model_rank_numeric(ToyNL(), [0.3, -1.2, 0.5, 2.0]) == 3


@pytest.mark.parametrize("theta, rank", [([1, 1, 0, 0], 2), ([0, 0, 0, 0], 2),
                                         ([1, 1, 0.5, 0], 3), ([1, 1, 0, -2], 3)])
def test_toynl_degenerate_strata(theta, rank):
    assert model_rank_numeric(ToyNL(), theta) == rank


def test_model_rank_toylinear_constant():
    assert model_rank_numeric(ToyLinear(), [0, 0, 0]) == 3


def test_model_rank_matfac_rank_two():
    assert model_rank_numeric(MatFac(4), matfac_point(4, 2, np.random.default_rng(2))) == 12


def test_model_rank_warns_when_not_saturated():
    spec = Fc2(3, 2)
    theta = np.random.default_rng(3).standard_normal(spec.param_count())
    with pytest.warns(NumericalWarning) as record:
        model_rank_numeric(spec, theta, probe_budget=6)
    assert set(record[0].message.values) == {"half_budget_rank", "full_budget_rank"}


def test_model_rank_seed_reproducible():
    spec = Cnn1d(5, 3, 2, bias=True)
    theta = np.random.default_rng(4).standard_normal(spec.param_count())
    a = rank_report(spec, theta, seed=9)
    b = rank_report(spec, theta, seed=9)
    assert a.model_rank_singular_values == b.model_rank_singular_values


# -- closed forms ------------------------------------------------------------

@pytest.mark.parametrize("r, rank", [(0, 0), (1, 7), (2, 12), (3, 15), (4, 16)])
def test_closed_form_matfac(r, rank):
    assert closed_form_rank(MatFac(4), MatFacTarget(r)) == rank


def test_closed_form_cnn1d_bias():
    spec = Cnn1d(5, 3, 1, bias=True)
    assert closed_form_rank(spec, CnnTarget(1, 0, True, False, True)) == 7
    assert closed_form_rank(spec, CnnTarget(1, 0, False, False, True)) == 15
    assert closed_form_rank(spec, CnnTarget(1, 0, True, True, True)) == 21


def test_closed_form_cnn2d():
    spec = Cnn2d(28, 3, 1)
    assert closed_form_rank(spec, CnnTarget(1, 0, True)) == 685
    assert closed_form_rank(spec, CnnTarget(1, 0, False)) == 6760
    assert closed_form_rank(spec, CnnTarget(1, 0, True, True)) == 530660


@pytest.mark.parametrize("spec, target", [
    (MatFac(4), Fc2Target(1)),
    (MatFac(4), MatFacTarget(5)),
    (Fc2(3, 2), Fc2Target(3)),
    (Cnn1d(5, 3, 1), CnnTarget(1, 0, True, False, True)),
    (Cnn1d(5, 3, 1, sharing=False), CnnTarget(1, 4, False)),
    (ToyNL(), MatFacTarget(1)),
    (DeepFc((3, 2, 1)), Fc2Target(1)),
])
def test_closed_form_mismatch(spec, target):
    with pytest.raises(InvalidInput):
        closed_form_rank(spec, target)


def test_closed_form_toy():
    assert closed_form_rank(ToyNL(), ToyTarget(False)) == 2
    assert closed_form_rank(ToyNL(), ToyTarget(True)) == 3
    assert closed_form_rank(ToyLinear(), ToyTarget(False)) == 3


@pytest.mark.parametrize("r", range(5))
def test_generic_agreement_matfac(r):
    rng = np.random.default_rng(10 + r)
    for _ in range(10):
        assert model_rank_numeric(MatFac(4), matfac_point(4, r, rng)) == \
            closed_form_rank(MatFac(4), MatFacTarget(r))


@pytest.mark.parametrize("d", [3, 5])
@pytest.mark.parametrize("bias", [False, True])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_generic_agreement_fc2(d, bias, k):
    spec = Fc2(d, 3, bias)
    rng = np.random.default_rng(100 * d + k)
    for _ in range(10):
        assert model_rank_numeric(spec, fc2_point(spec, k, rng)) == \
            closed_form_rank(spec, Fc2Target(k))


CNN_CASES = [
    (Cnn1d(5, 3, 2), 1, 0), (Cnn1d(5, 3, 2), 2, 0),
    (Cnn1d(5, 3, 2, bias=True), 1, 0), (Cnn1d(5, 3, 2, bias=True), 2, 0),
    (Cnn1d(6, 2, 2, sharing=False), 1, 0), (Cnn1d(6, 2, 2, sharing=False), 2, 3),
    (Cnn1d(5, 3, 2, sharing=False, bias=True), 1, 1), (Cnn1d(5, 3, 2, sharing=False, bias=True), 2, 2),
    (Cnn2d(4, 2, 2), 1, 0), (Cnn2d(4, 2, 2), 2, 0),
    (Cnn2d(4, 3, 1, sharing=False), 1, 0), (Cnn2d(4, 3, 2, sharing=False), 2, 3),
]


@pytest.mark.parametrize("spec, k, m_null", CNN_CASES)
def test_generic_agreement_cnn(spec, k, m_null):
    rng = np.random.default_rng(k * 7 + m_null)
    bias = getattr(spec, "bias", False)
    for _ in range(10):
        theta = cnn_point(spec, k, m_null, rng)
        expected = closed_form_rank(spec, CnnTarget(k, m_null, spec.sharing, False, bias))
        assert model_rank_numeric(spec, theta) == expected
        fc, fc_theta = models.to_fully_connected(spec, theta)
        expected_fc = closed_form_rank(spec, CnnTarget(k, m_null, spec.sharing, True, bias))
        if spec.sharing and m_null == 0 or not spec.sharing:
            assert model_rank_numeric(fc, fc_theta) == expected_fc


def test_deep_upper_bound():
    assert deep_rank_upper_bound((4, 3, 1)) == 4 * 3 + 3
    spec = DeepFc((3, 4, 2, 1))
    theta = np.random.default_rng(5).standard_normal(spec.param_count())
    assert model_rank_numeric(spec, theta) <= deep_rank_upper_bound(spec.widths)


@pytest.mark.parametrize("narrow, wide", [
    ("fc2:d=4,m=2", "fc2:d=4,m=2"), ("fc2:d=4,m=2", "fc2:d=4,m=6"),
    ("fc2:d=4,m=2", "fc2:d=4,m=20"), ("cnn1d:d=5,s=3,m=1,bias", "cnn1d:d=5,s=3,m=3,bias"),
    ("cnn1d:d=5,s=3,m=1,bias", "cnn1d:d=5,s=3,m=10,bias"),
    ("cnn1d:d=5,s=3,m=1,nosharing", "cnn1d:d=5,s=3,m=3,nosharing"),
])
def test_embedding_keeps_model_rank(narrow, wide):
    sn, sw = models.parse_spec(narrow), models.parse_spec(wide)
    theta = np.random.default_rng(6).standard_normal(sn.param_count())
    assert model_rank_numeric(sw, models.embed_wider(sn, theta, sw)) == model_rank_numeric(sn, theta)


# -- stability ---------------------------------------------------------------

def test_stable_with_two_points():
    stable, report = is_linearly_stable(ToyNL(), [1, 1, 0, 0], toy_data(2))
    assert stable
    assert report.empirical_rank == report.model_rank_numeric == 2


def test_unstable_with_one_point():
    stable, report = is_linearly_stable(ToyNL(), [1, 1, 0, 0], toy_data(1))
    assert not stable
    assert report.empirical_rank == 1


def test_stability_requires_interpolation():
    with pytest.raises(PreconditionViolated):
        is_linearly_stable(ToyNL(), [1, 0.5, 0, 0], toy_data(3))


def test_sequence_prefix_of_seven_is_unstable():
    spec, theta = minimal_rank_factorization(targets.matrix("M2"))
    entries = targets.sequence("seq1")[:7]
    data = Dataset(entries, targets.matrix("M2")[entries[:, 0], entries[:, 1]])
    stable, report = is_linearly_stable(spec, theta, data)
    assert not stable
    assert report.empirical_rank < 7 == report.model_rank_numeric


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 16), st.integers(0, 10 ** 6))
def test_stable_implies_enough_samples(n, seed):
    spec, theta = minimal_rank_factorization(targets.matrix("M4"))
    rng = np.random.default_rng(seed)
    entries = spec.all_entries()[rng.permutation(16)[:n]]
    data = Dataset(entries, spec.forward_batch(theta, entries))
    stable, report = is_linearly_stable(spec, theta, data)
    if stable:
        assert report.model_rank_numeric <= n


def test_minimal_rank_factorization():
    m = targets.matrix("M4")
    spec, theta = minimal_rank_factorization(m)
    p = spec.unpack(theta)
    np.testing.assert_allclose(p["A"] @ p["B"], m, atol=1e-12)
    assert numerics.numerical_rank(p["A"]) == numerics.numerical_rank(p["B"]) == 2


# -- stability onset ---------------------------------------------------------

# Independent per-prefix recomputation (explicit gradient rows assembled
# entry by entry) gave these onsets for the published orders, with the
# repeated (3,3) of the third order dropped.
SEQUENCE_ONSETS = {"seq1": 8, "seq2": 9, "seq3": 11, "seq4": 11, "seq5": 12, "seq6": 13}


@pytest.mark.parametrize("name", sorted(SEQUENCE_ONSETS))
def test_sequence_onsets(name):
    spec, theta = minimal_rank_factorization(targets.matrix("M2"))
    assert stability_onset(spec, theta, targets.sequence(name)) == SEQUENCE_ONSETS[name]


def _brute_force_onset(a, b, entries, target_rank):
    for n in range(1, len(entries) + 1):
        rows = []
        for i, j in entries[:n]:
            ga = np.zeros_like(a)
            ga[i, :] = b[:, j]
            gb = np.zeros_like(b)
            gb[:, j] = a[i, :]
            rows.append(np.concatenate([ga.ravel(), gb.ravel()]))
        s = np.linalg.svd(np.array(rows), compute_uv=False)
        if np.sum(s > 1e-8 * s[0]) == target_rank:
            return n
    return None


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 3))
def test_onset_matches_brute_force(seed, r):
    rng = np.random.default_rng(seed)
    spec = MatFac(4)
    theta = matfac_point(4, r, rng)
    order = spec.all_entries()[rng.permutation(16)]
    p = spec.unpack(theta)
    n_t = stability_onset(spec, theta, order)
    assert n_t == _brute_force_onset(p["A"], p["B"], order, 2 * r * 4 - r * r)
    assert n_t >= closed_form_rank(spec, MatFacTarget(r))


def test_row_major_onset_at_least_rank():
    spec, theta = minimal_rank_factorization(targets.matrix("M1"))
    assert stability_onset(spec, theta, spec.all_entries()) >= 7


def test_onset_not_found():
    spec, theta = minimal_rank_factorization(targets.matrix("M1"))
    with pytest.raises(NotFound):
        stability_onset(spec, theta, spec.all_entries()[:5])


def test_prefix_ranks_monotone_and_capped():
    spec = Fc2(3, 2)
    rng = np.random.default_rng(7)
    theta = rng.standard_normal(spec.param_count())
    ranks = prefix_ranks(spec, theta, spec.sample_inputs(20, rng))
    assert all(b >= a for a, b in zip(ranks, ranks[1:]))
    assert ranks[-1] == model_rank_numeric(spec, theta)
    assert ranks == [min(n, ranks[-1]) for n in range(1, 21)]


# -- tables ------------------------------------------------------------------

def test_stratify_matfac():
    rows = [(r.rank, r.stratum) for r in stratify(MatFac(4)).rows]
    assert rows == [(0, "r=0"), (7, "r=1"), (12, "r=2"), (15, "r=3"), (16, "r=4")]
    assert "r=1 → 7" in stratify(MatFac(4)).to_text()


def test_stratify_toynl():
    rows = [(r.rank, r.stratum) for r in stratify(ToyNL()).rows]
    assert rows[0] == (2, "span{1, x1}")
    assert rows[1][0] == 3 and "a2 != 0" in rows[1][1]


def test_stratify_deep_rows_are_upper_bounds():
    table = stratify(DeepFc((5, 4, 1)))
    last = table.rows[-1]
    assert last.rank == 5 * 4 + 4 and last.upper_bound
    assert all(r.upper_bound for r in table.rows)
    assert "(upper bound)" in table.to_text()


def test_stratify_cnn_columns():
    row = stratify(Cnn1d(5, 3, 1, bias=True)).rows[1]
    assert row.columns == {"shared": 7, "unshared": 15, "fc": 21}


def test_stratify_fc2_json():
    import json
    d = json.loads(stratify(Fc2(5, 2)).to_json())
    assert [r["rank"] for r in d["rows"]] == [0, 6, 12]


def test_rank_report_fields():
    spec, theta = minimal_rank_factorization(targets.matrix("M1"))
    entries = spec.all_entries()[:9]
    rep = rank_report(spec, theta, entries, target=MatFacTarget(1))
    assert rep.model_rank_closed_form == rep.model_rank_numeric == 7
    assert rep.empirical_rank <= min(9, rep.model_rank_numeric)
    assert rep.probe_count == 16
    assert len(rep.singular_values) == 9
    d = rep.to_dict()
    assert d["rel_tol"] == 1e-8


def test_dataset_validation():
    with pytest.raises(InvalidInput):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(InvalidInput):
        Dataset(np.zeros((0, 2)), np.zeros(0))
    spec, theta = minimal_rank_factorization(targets.matrix("M1"))
    with pytest.raises(InvalidInput):
        is_linearly_stable(spec, theta, Dataset([[0, 0], [0, 0]], [1.0, 1.0]))
