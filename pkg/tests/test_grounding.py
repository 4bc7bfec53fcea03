import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detrack.grounding import (
    MAX_TOKENS,
    AlignmentBatch,
    TextPrompt,
    TokenSpanDistribution,
    _contrastive_terms,
    build_prompt,
    classify_by_alignment,
    contrastive_alignment_grad,
    contrastive_alignment_loss,
    entropy,
    soft_token_loss,
    soft_token_loss_grad,
    target_distribution,
)
from detrack.tensor_core import check_gradient, softmax


def contrastive_by_loops(O, T, pos, tau):
    """Straight transcription of the two normalized InfoNCE sums."""
    n, l = pos.shape
    l_obj = 0.0
    for i in range(n):
        tp = [j for j in range(l) if pos[i, j]]
        if not tp:
            continue
        denom = sum(math.exp(float(O[i] @ T[k]) / tau) for k in range(l))
        l_obj += sum(-math.log(math.exp(float(O[i] @ T[j]) / tau) / denom) for j in tp) / len(tp)
    l_tok = 0.0
    for i in range(l):
        op = [j for j in range(n) if pos[j, i]]
        if not op:
            continue
        denom = sum(math.exp(float(T[i] @ O[k]) / tau) for k in range(n))
        l_tok += sum(-math.log(math.exp(float(T[i] @ O[j]) / tau) / denom) for j in op) / len(op)
    return 0.5 * (l_obj + l_tok)


class TestPrompt:
    def test_two_categories(self):
        p = build_prompt(["airplane", "zebra"])
        assert p.span("airplane") == (0, 1) and p.span("zebra") == (1, 2)
        assert p.token_count == 2

    def test_multi_word(self):
        p = build_prompt(["giant panda"])
        assert p.span("giant panda") == (0, 2) and p.token_count == 2

    def test_token_limit(self):
        build_prompt([f"c{i}" for i in range(MAX_TOKENS)])
        with pytest.raises(ValueError):
            build_prompt([f"c{i}" for i in range(MAX_TOKENS + 1)])

    def test_duplicates_and_empty(self):
        with pytest.raises(ValueError):
            build_prompt(["car", "car"])
        with pytest.raises(ValueError):
            build_prompt([])

    def test_json(self):
        p = build_prompt(["person", "traffic light", "car"])
        d = json.loads(p.to_json())
        assert d == {"categories": ["person", "traffic light", "car"], "spans": [[0, 1], [1, 3], [3, 4]]}
        assert TextPrompt.from_json(p.to_json()) == p


class TestTargetDistribution:
    def test_uniform_span(self):
        np.testing.assert_array_equal(target_distribution((0, 2), 4).probs, [0.5, 0.5, 0, 0, 0])

    def test_no_object(self):
        np.testing.assert_array_equal(target_distribution(None, 3).probs, [0, 0, 0, 1])

    def test_singleton(self):
        np.testing.assert_array_equal(target_distribution((1, 2), 2).probs, [0, 1, 0])

    def test_empty_span(self):
        with pytest.raises(ValueError):
            target_distribution((1, 1), 3)

    def test_distribution_validation(self):
        with pytest.raises(ValueError):
            TokenSpanDistribution(np.array([0.5, 0.6]))


class TestSoftTokenLoss:
    def test_exact_one_hot_match(self):
        t = target_distribution(None, 3)
        assert soft_token_loss([t], [t]) == 0.0

    def test_uniform_two_token_span(self):
        t = target_distribution((0, 2), 3)
        assert soft_token_loss([t], [t]) == pytest.approx(math.log(2), abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_cross_entropy_identity_and_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        p = softmax(rng.normal(size=int(rng.integers(2, 8))) * 3)
        assert abs(soft_token_loss([p], [p]) - entropy(p)) < 1e-9
        q = softmax(rng.normal(size=p.size))
        assert soft_token_loss([q], [p]) >= 0

    def test_zero_only_for_matching_one_hot(self):
        t = target_distribution((1, 2), 3)
        assert soft_token_loss([t], [t]) == 0.0
        assert soft_token_loss([TokenSpanDistribution(np.array([0.1, 0.9, 0, 0]))], [t]) > 0

    def test_length_mismatch(self):
        t = target_distribution(None, 2)
        with pytest.raises(ValueError):
            soft_token_loss([t, t], [t])

    def test_logit_path_agrees_with_distribution_path(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(3, 5))
        targets = [target_distribution((0, 2), 4), target_distribution(None, 4), target_distribution((3, 4), 4)]
        loss, _ = soft_token_loss_grad(z, targets)
        assert loss == pytest.approx(soft_token_loss([softmax(r) for r in z], targets), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=(1, 6))
        targets = [target_distribution((1, 3), 5)]
        _, g = soft_token_loss_grad(z, targets)
        report = check_gradient(lambda x: soft_token_loss_grad(x, targets)[0], g, z, 1e-5)
        assert report.max_rel_err < 1e-3

    def test_three_token_toy_gradient(self):
        z = np.array([[0.2, -0.4, 1.1, 0.0]])
        targets = [target_distribution((0, 2), 3)]
        _, g = soft_token_loss_grad(z, targets)
        assert check_gradient(lambda x: soft_token_loss_grad(x, targets)[0], g, z, 1e-5).max_abs_err < 1e-4


class TestContrastive:
    def test_single_pair_is_zero(self):
        b = AlignmentBatch(np.array([[1.0, 2.0]]), np.array([[0.5, -1.0]]), np.array([[True]]))
        assert contrastive_alignment_loss(b) == 0.0

    def test_half_ln2_fixture(self):
        O = np.array([[1.0, 0.0]])
        T = np.array([[0.0, 1.0], [0.0, -1.0]])
        b = AlignmentBatch.from_sets(O, T, [[0]])
        assert abs(contrastive_alignment_loss(b) - 0.5 * math.log(2)) < 1e-12

    @given(st.integers(0, 10_000))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n, l, d = (int(v) for v in rng.integers(1, 5, size=3))
        O, T = rng.normal(size=(n, d)), rng.normal(size=(l, d))
        pos = rng.random((n, l)) < 0.5
        pos[0, 0] = True
        tau = float(rng.uniform(0.07, 2.0))
        got = contrastive_alignment_loss(AlignmentBatch(O, T, pos, tau))
        assert got == pytest.approx(contrastive_by_loops(O, T, pos, tau), rel=1e-9, abs=1e-9)

    def test_token_permutation_invariance(self):
        rng = np.random.default_rng(3)
        O, T = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
        pos = rng.random((3, 5)) < 0.5
        pos[:, 0] = True
        perm = rng.permutation(5)
        a = contrastive_alignment_loss(AlignmentBatch(O, T, pos))
        b = contrastive_alignment_loss(AlignmentBatch(O, T[perm], pos[:, perm]))
        assert a == pytest.approx(b, rel=1e-12)

    def test_row_shift_leaves_object_term(self):
        rng = np.random.default_rng(4)
        O, T = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
        pos = rng.random((3, 5)) < 0.5
        pos[:, 1] = True
        tau = 0.5
        shift = rng.normal(size=(3, 1)) * tau
        # an extra coordinate adds shift[i] / tau to every logit of object i
        O2 = np.hstack([O, shift])
        T2 = np.hstack([T, np.ones((5, 1))])
        l_obj = _contrastive_terms(AlignmentBatch(O, T, pos, tau))[3]
        l_obj2 = _contrastive_terms(AlignmentBatch(O2, T2, pos, tau))[3]
        assert l_obj == pytest.approx(l_obj2, rel=1e-12)

    def test_gradient_3x4(self):
        rng = np.random.default_rng(6)
        O, T = rng.normal(scale=0.4, size=(3, 5)), rng.normal(scale=0.4, size=(4, 5))
        pos = np.array([[1, 0, 0, 1], [0, 1, 0, 0], [0, 0, 0, 0]], dtype=bool)
        _, gO, gT = contrastive_alignment_grad(AlignmentBatch(O, T, pos))
        x = np.concatenate([O.ravel(), T.ravel()])

        def f(v):
            return contrastive_alignment_loss(AlignmentBatch(v[:15].reshape(3, 5), v[15:].reshape(4, 5), pos))

        assert check_gradient(f, np.concatenate([gO.ravel(), gT.ravel()]), x).max_rel_err < 1e-3

    def test_validation(self):
        with pytest.raises(ValueError):
            AlignmentBatch(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 1), bool), temperature=0.0)
        with pytest.raises(ValueError):
            AlignmentBatch(np.array([[np.nan, 1.0]]), np.ones((1, 2)), np.ones((1, 1), bool))
        with pytest.raises(ValueError):
            contrastive_alignment_loss(AlignmentBatch(np.ones((1, 2)), np.ones((2, 2)), np.zeros((1, 2), bool)))


class TestClassify:
    def test_one_hot(self):
        p = build_prompt(["airplane", "zebra"])
        assert classify_by_alignment(target_distribution((1, 2), 2), p) == ("zebra", 1.0)

    def test_no_object_then_exclude(self):
        p = build_prompt(["a", "b"])
        d = TokenSpanDistribution(np.array([0.3, 0.3, 0.4]))
        assert classify_by_alignment(d, p) == (None, 0.4)
        cat, score = classify_by_alignment(d, p, exclude_no_object=True)
        assert cat == "a" and score == pytest.approx(0.3)

    def test_tie_goes_to_first_span(self):
        p = build_prompt(["a", "b"])
        d = TokenSpanDistribution(np.array([0.5, 0.5, 0.0]))
        assert classify_by_alignment(d, p)[0] == "a"

    def test_renaming_invariance(self):
        rng = np.random.default_rng(8)
        d = TokenSpanDistribution(softmax(rng.normal(size=5)))
        p1 = build_prompt(["cat", "big dog", "owl"])
        p2 = build_prompt(["x", "y z", "w"])
        c1, s1 = classify_by_alignment(d, p1)
        c2, s2 = classify_by_alignment(d, p2)
        assert s1 == s2
        assert (c1 is None) == (c2 is None)
        if c1 is not None:
            assert p1.categories.index(c1) == p2.categories.index(c2)

    def test_token_count_mismatch(self):
        with pytest.raises(ValueError):
            classify_by_alignment(target_distribution(None, 3), build_prompt(["a"]))
