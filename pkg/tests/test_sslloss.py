"""Masking rules and loss terms."""

import math

import numpy as np
import pytest

from marginlab.nncore import init_params, loss_and_grads, softmax
from marginlab.rng import make_rng
from marginlab.sslloss import (
    decide_masks, erroneous_loss, mask_margin, sum_divisors, supervised_loss, term_weights, total_loss,
    unlabeled_loss,
)
from marginlab.thresholds import ThresholdState
from marginlab.types import MaskDecision, Method


def _random_batch(rng, num_outputs):
    n = int(rng.integers(1, 40))
    logits = rng.normal(0, 2.5, size=(n, num_outputs))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    return np.arange(n), probs


class TestMaskMargin:

    def test_both_gates_pass(self):
        d = mask_margin(0.9, 0, np.array([0.85, 0.85]), apm=0.6, gamma=0.5)
        assert d.included

    def test_trust_gate_fails(self):
        d = mask_margin(0.9, 0, np.array([0.85, 0.85]), apm=0.4, gamma=0.5)
        assert not d.included and d.conf_gate and not d.apm_gate

    def test_unset_gamma_reduces_to_flex(self):
        d = mask_margin(0.9, 0, np.array([0.85, 0.85]), apm=-1e9, gamma=-math.inf)
        assert d.apm_gate and d.included

    def test_virtual_class_never_included(self):
        d = mask_margin(0.99, 2, np.array([0.5, 0.5, 0.5]), apm=5.0, gamma=0.0, virtual_class=2)
        assert not d.included


class TestDecideMasks:

    def test_matches_independent_predicate(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            num_outputs = int(rng.integers(3, 6))
            ids, probs = _random_batch(rng, num_outputs)
            state = ThresholdState(num_outputs=num_outputs, tau=0.95)
            state.flex = rng.uniform(0.1, 0.95, size=num_outputs)
            state.gamma = float(rng.normal())
            gate = rng.normal(size=len(ids))
            virtual = num_outputs - 1

            margin = decide_masks(Method.MARGINMATCH, ids, probs, state, virtual, gate)
            flex = decide_masks(Method.FLEXMATCH, ids, probs, state, virtual)

            expected = set()
            for i in ids:
                c = int(np.argmax(probs[i]))
                if gate[i] > state.gamma and probs[i].max() > state.flex[c] and c != virtual:
                    expected.add(int(i))
            got = {d.example_id for d in margin if d.included}
            assert got == expected
            assert got <= {d.example_id for d in flex if d.included}

    def test_agrees_with_single_example_rule(self):
        rng = np.random.default_rng(23)
        ids, probs = _random_batch(rng, 4)
        state = ThresholdState(num_outputs=4, tau=0.9)
        state.flex = rng.uniform(0.2, 0.9, size=4)
        state.gamma = 0.1
        gate = rng.normal(size=len(ids))
        batch = decide_masks(Method.MARGINMATCH, ids, probs, state, 3, gate)
        single = [
            mask_margin(probs[i].max(), int(probs[i].argmax()), state.flex, gate[i], state.gamma,
                        virtual_class=3, example_id=int(i))
            for i in ids
        ]
        assert batch == single

    def test_unset_gamma_equals_flex(self):
        rng = np.random.default_rng(22)
        ids, probs = _random_batch(rng, 3)
        state = ThresholdState(num_outputs=3, tau=0.6)
        margin = decide_masks(Method.MARGINMATCH, ids, probs, state, 2, rng.normal(size=len(ids)))
        flex = decide_masks(Method.FLEXMATCH, ids, probs, state, 2)
        assert [d.included for d in margin] == [d.included for d in flex]

    def test_fixmatch_uses_tau(self):
        probs = np.array([[0.96, 0.02, 0.02], [0.90, 0.05, 0.05]])
        state = ThresholdState(num_outputs=3, tau=0.95)
        state.flex = np.array([0.1, 0.1, 0.1])
        decisions = decide_masks(Method.FIXMATCH, np.array([7, 8]), probs, state, 2)
        assert [d.included for d in decisions] == [True, False]
        assert all(d.apm_gate for d in decisions)

    def test_marginmatch_needs_gate_values(self):
        with pytest.raises(ValueError):
            decide_masks(Method.MARGINMATCH, np.array([0]), np.array([[0.5, 0.5]]), ThresholdState(2), 1)


class TestLosses:

    def test_supervised(self):
        assert supervised_loss(np.array([[0.0, 1.0]]), [1]) == 0.0
        assert supervised_loss(np.array([[0.5, 0.5]]), [0]) == pytest.approx(math.log(2))
        probs = np.array([[0.5, 0.5], [0.25, 0.75]])
        assert supervised_loss(probs, [0, 1]) == pytest.approx((math.log(2) - math.log(0.75)) / 2)

    def test_unlabeled_all_masked(self):
        decisions = [MaskDecision(0, 1, 0.5, False, True, False)]
        assert unlabeled_loss(decisions, np.array([[1 / 3, 1 / 3, 1 / 3]])) == 0.0

    def test_unlabeled_included(self):
        one_hot = [MaskDecision(0, 1, 0.99, True, True, True)]
        assert unlabeled_loss(one_hot, np.array([[0.0, 1.0, 0.0]])) == 0.0
        assert unlabeled_loss(one_hot, np.array([[1 / 3, 1 / 3, 1 / 3]])) == pytest.approx(math.log(3))

    def test_erroneous_is_a_sum(self):
        assert erroneous_loss(np.array([[0.0, 0.0, 1.0]]), 2) == 0.0
        assert erroneous_loss(np.full((2, 3), 1 / 3), 2) == pytest.approx(2 * math.log(3))
        assert erroneous_loss(np.array([[0.25, 0.25, 0.5]]), 2) == pytest.approx(math.log(2))

    def test_total(self):
        assert total_loss(1.0, 2.0, 3.0, 0.5) == 3.5
        with pytest.raises(ValueError):
            total_loss(1.0, 2.0, 3.0, -1.0)

    def test_term_weights(self):
        assert term_weights(4, 1.0, batch_size=4, nu=7) == (0.25, 1.0, 1.0)
        assert term_weights(4, 2.0, batch_size=4, nu=7, normalize_sums=True) == (0.25, 2.0 / 28, 0.5)

    def test_ragged_batch_keeps_configured_divisors(self):
        # final batch of 5 unlabeled and 1 erroneous example, B=10, nu=7
        w = term_weights(1, 1.0, batch_size=10, nu=7, normalize_sums=True)
        assert w == (1.0, 1.0 / 70, 1.0 / 10)
        assert sum_divisors(10, 7) == (1.0, 1.0)


class TestGradientFlow:

    @staticmethod
    def _network():
        return init_params([2, 6, 3], make_rng(4, "init"))

    def test_masked_example_is_same_as_absent(self):
        params = self._network()
        rng = np.random.default_rng(5)
        x = rng.normal(size=(5, 2))
        y = np.array([0, 1, 1, 0, 2])
        w = np.array([0.5, 1.0, 0.0, 1.0, 1.0])
        keep = w > 0
        with_masked = loss_and_grads(params, x, y, w)
        without = loss_and_grads(params, x[keep], y[keep], w[keep])
        assert with_masked.total == pytest.approx(without.total, rel=1e-12)
        for a, b in zip(with_masked.grads.tensors(), without.grads.tensors()):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_pseudo_labels_carry_no_gradient(self):
        params = self._network()
        rng = np.random.default_rng(6)
        x_strong = rng.normal(size=(4, 2))
        state = ThresholdState(num_outputs=3, tau=0.5)
        logits = np.array([[4.0, 0.0, -1.0], [0.0, 5.0, 1.0], [0.2, 0.0, 0.1], [-1.0, 3.0, 0.0]])
        # same argmax and same gate outcome, different confidences
        shifted = logits + np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.01, 0.0, 0.0], [0.0, 0.5, 0.0]])
        grads = []
        for weak_logits in (logits, shifted):
            decisions = decide_masks(Method.FLEXMATCH, np.arange(4), softmax(weak_logits), state, 2)
            targets = np.array([d.pseudo_label for d in decisions])
            weights = np.array([1.0 if d.included else 0.0 for d in decisions])
            grads.append((targets, weights, loss_and_grads(params, x_strong, targets, weights).grads))
        (t_a, w_a, g_a), (t_b, w_b, g_b) = grads
        np.testing.assert_array_equal(t_a, t_b)
        np.testing.assert_array_equal(w_a, w_b)
        assert w_a.tolist() == [1.0, 1.0, 0.0, 1.0]
        for a, b in zip(g_a.tensors(), g_b.tensors()):
            np.testing.assert_array_equal(a, b)
