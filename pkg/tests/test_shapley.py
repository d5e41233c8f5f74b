import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modforge import shapley
from modforge.errors import UsageError
from modforge.models import EARLY_MAXOUT, LATE_SUM
from modforge.tensor import no_grad

from helpers import make_batch, make_model, randomize
from oracles import shapley_by_permutations, softmax_logprob


class ScalarGame:
    """A K=1 'model' defined by a coalition table, for hand-checked cases."""

    def __init__(self, names, table):
        self.names = names
        self.table = table

    def forward_masked(self, batch, present):
        from modforge.tensor import Tensor
        return Tensor([[self.table[frozenset(present)]]])


def test_two_modality_hand_example():
    game = ScalarGame(["m1", "m2"], {frozenset({"m1", "m2"}): 4.0, frozenset({"m2"}): 1.0,
                                     frozenset({"m1"}): 3.0})
    outs = shapley.masked_outputs(game, None)
    per = shapley.combine(game.names, outs)
    assert per["m1"].data.item() == pytest.approx(3.0)
    assert per["m2"].data.item() == pytest.approx(1.0)
    assert per["m1"].data.item() + per["m2"].data.item() == pytest.approx(4.0)


@pytest.mark.parametrize("kind", [LATE_SUM, EARLY_MAXOUT])
@pytest.mark.parametrize("k", [2, 3])
def test_matches_permutation_oracle_and_sums_to_output(kind, k, rng):
    for trial in range(5):
        m = randomize(make_model(kind, dims=(5, 4, 3)[:k], seed=trial), rng)
        x = make_batch(m, 6, rng)
        with no_grad():
            outs = shapley.mono_modal_outputs(m, x)
            oracle = shapley_by_permutations(m.names, lambda S: m.forward_masked(x, S).data)
        for name in m.names:
            assert np.max(np.abs(outs[name].data - oracle[name])) < 1e-10
        assert outs.sum_residual() < 1e-9


def test_k2_equals_closed_form(rng):
    m = randomize(make_model(EARLY_MAXOUT), rng)
    x = make_batch(m, 6, rng)
    with no_grad():
        outs = shapley.mono_modal_outputs(m, x)
        full = m.forward_full(x).data
        only_a = m.forward_masked(x, {"a"}).data
        only_v = m.forward_masked(x, {"v"}).data
    np.testing.assert_allclose(outs["a"].data, 0.5 * (full - only_v + only_a), rtol=0, atol=1e-12)
    np.testing.assert_allclose(outs["v"].data, 0.5 * (full - only_a + only_v), rtol=0, atol=1e-12)


def _zero_biases(m):
    for n, p in m.params.items():
        if n.endswith("bias"):
            p.data[:] = 0.0


def test_null_player_early(rng):
    # with phi(empty) = 0 a null modality receives half the zero-input output;
    # that share vanishes when the zero input maps to zero logits
    m = randomize(make_model(EARLY_MAXOUT), rng)
    m.params["enc.v.0.weight"].data[:] = 0.0
    _zero_biases(m)
    x = make_batch(m, 5, rng)
    outs = shapley.mono_modal_outputs(m, x)
    np.testing.assert_array_equal(outs["v"].data, 0.0)
    np.testing.assert_allclose(outs["a"].data, m.forward_full(x).data, atol=1e-12)


def test_null_player_share_is_input_independent(rng):
    m = randomize(make_model(EARLY_MAXOUT), rng)
    m.params["enc.v.0.weight"].data[:] = 0.0
    x = make_batch(m, 5, rng)
    outs = shapley.mono_modal_outputs(m, x)
    baseline = m.forward_masked({"a": np.zeros((5, 5))}, {"a"}).data
    np.testing.assert_allclose(outs["v"].data, 0.5 * baseline, atol=1e-12)


def test_null_player_late(rng):
    m = randomize(make_model(LATE_SUM), rng)
    for n in ("head.v.weight", "head.v.bias"):
        m.params[n].data[:] = 0.0
    x = make_batch(m, 5, rng)
    outs = shapley.mono_modal_outputs(m, x)
    np.testing.assert_allclose(outs["v"].data, 0.0, atol=1e-12)


def test_relabeling_permutes_attributions(rng):
    m = randomize(make_model(EARLY_MAXOUT, dims=(4, 4, 4)), rng)
    x = make_batch(m, 5, rng)
    outs = shapley.mono_modal_outputs(m, x)
    # swap modality order: same parameters attached to the same names
    from modforge import models
    swapped = models.build([m.spec("v"), m.spec("a"), m.spec("t")], m.fusion, 3, 0)
    params = m.state_dict()
    # fusion weights are laid out by concatenation order; permute their rows accordingly
    h = 6
    for p in range(m.fusion.maxout_pieces):
        W = params[f"fusion.{p}.weight"]
        params[f"fusion.{p}.weight"] = np.vstack([W[h:2 * h], W[:h], W[2 * h:]])
    swapped.load_state_dict(params)
    np.testing.assert_allclose(swapped.forward_full(x).data, m.forward_full(x).data, atol=1e-12)
    outs2 = shapley.mono_modal_outputs(swapped, x)
    for n in m.names:
        np.testing.assert_allclose(outs2[n].data, outs[n].data, atol=1e-10)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_generic_path_cost(k, rng):
    m = make_model(EARLY_MAXOUT, dims=(3,) * k)
    x = make_batch(m, 2, rng)
    m.forward_count = 0
    shapley.mono_modal_outputs(m, x)
    assert m.forward_count == 2 ** k - 1


def test_late_fast_path_matches_generic(rng):
    for k in (2, 3):
        m = randomize(make_model(LATE_SUM, dims=(5, 4, 3)[:k]), rng)
        x = make_batch(m, 6, rng)
        fast = shapley.mono_modal_outputs_late_fast(m, x)
        slow = shapley.mono_modal_outputs(m, x)
        for n in m.names:
            assert np.max(np.abs(fast[n].data - slow[n].data)) < 1e-9
        assert fast.full.data.tobytes() == m.forward_full(x).data.tobytes()


def test_late_fast_path_cost_and_guard(rng):
    m = make_model(LATE_SUM)
    x = make_batch(m, 3, rng)
    m.branch_evals = 0
    shapley.mono_modal_outputs_late_fast(m, x)
    assert m.branch_evals == 2
    with pytest.raises(UsageError):
        shapley.mono_modal_outputs_late_fast(make_model(EARLY_MAXOUT), x)


def test_single_modality_is_degenerate(rng):
    m = make_model(LATE_SUM, dims=(4,))
    x = make_batch(m, 3, rng)
    outs = shapley.mono_modal_outputs(m, x)
    assert outs["a"].data.tobytes() == outs.full.data.tobytes()


def test_more_than_four_modalities_warns(rng):
    m = make_model(LATE_SUM, dims=(2,) * 4)
    m.modalities.append(type(m.modalities[0])("y", 2, (6,)))
    m.params.clear()
    m._build()
    x = make_batch(m, 2, rng)
    with pytest.warns(RuntimeWarning):
        outs = shapley.mono_modal_outputs(m, x)
    assert outs.sum_residual() < 1e-9


def test_outputs_are_differentiable(rng):
    m = make_model(EARLY_MAXOUT)
    x = make_batch(m, 3, rng)
    outs = shapley.mono_modal_outputs(m, x)
    assert outs["a"].requires_grad


def test_score_cases(rng):
    labels = np.array([0, 1, 1, 0])
    assert shapley.mono_modal_score(np.zeros((4, 2)), labels) == pytest.approx(-0.6931, abs=1e-4)
    confident = np.where(np.eye(2)[labels] > 0, 10.0, -10.0)
    assert shapley.mono_modal_score(confident, labels) == pytest.approx(0.0, abs=1e-8)
    logits = rng.normal(size=(16, 5))
    y = rng.integers(0, 5, 16)
    assert abs(shapley.mono_modal_score(logits, y) - softmax_logprob(logits, y)) < 1e-10


def test_accuracy_cases():
    y = np.array([0, 1, 2, 1])
    assert shapley.mono_modal_accuracy(np.eye(3)[y] * 10, y) == 1.0
    assert shapley.mono_modal_accuracy(np.eye(3)[(y + 1) % 3] * 10, y) == 0.0
    hand = np.array([[5, 1, 0], [0, 4, 1], [0, 9, 1], [0, 3, 0]], dtype=float)
    assert shapley.mono_modal_accuracy(hand, y) == 0.75
    assert shapley.mono_modal_accuracy(np.zeros((4, 3)), y) == 0.25  # ties -> class 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), kind=st.sampled_from([LATE_SUM, EARLY_MAXOUT]), k=st.sampled_from([2, 3]))
def test_sum_identity_property(seed, kind, k):
    rng = np.random.default_rng(seed)
    m = randomize(make_model(kind, dims=(4, 3, 2)[:k], seed=seed), rng, scale=2.0)
    x = make_batch(m, 4, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        outs = shapley.mono_modal_outputs(m, x)
    assert outs.sum_residual() < 1e-9
