import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import log_softmax

from cslid.ctc import (
    CtcAlphabet,
    EmissionMatrix,
    beam_decode,
    brute_force_best_sequence,
    brute_force_loss,
    collapse,
    ctc_loss,
    forced_align,
    greedy_decode,
    logit_gradient,
    min_frames,
    sequence_log_prob,
    with_frame_path,
)
from cslid.errors import InfeasibleTargetError, InvalidParameterError, OracleTooLargeError

from .conftest import random_emissions


def _random_target(rng, T, K):
    while True:
        n = int(rng.integers(1, T + 1))
        target = tuple(int(c) for c in rng.integers(1, K, size=n))
        if min_frames(target) <= T:
            return target


def _n_prefixes(T, K):
    """Number of distinct label sequences of length <= T: a beam this wide never prunes."""
    return sum((K - 1) ** n for n in range(T + 1))


def _loop_collapse(path, blank):
    out, prev = [], None
    for sym in path:
        if sym != prev and sym != blank:
            out.append(sym)
        prev = sym
    return out


class TestAlphabet:
    def test_default_layout(self):
        a = CtcAlphabet.from_labels()
        assert a.symbols == ("-", "′", "G", "E", "S") and a.size == 5
        assert a.encode("GES") == (2, 3, 4)
        assert a.decode((4, 2)) == "SG"

    def test_blank_in_target(self):
        with pytest.raises(InvalidParameterError):
            CtcAlphabet().encode("G-E")

    def test_emission_validation(self):
        with pytest.raises(InvalidParameterError):
            EmissionMatrix(np.zeros((3, 4)))
        e = EmissionMatrix.from_logits(np.arange(12.0).reshape(3, 4))
        np.testing.assert_allclose(np.exp(e.log_probs).sum(axis=1), 1.0)


class TestLoss:
    def test_hand_value(self):
        # uniform over {blank, a}, T=2: paths aa, a-, -a collapse to "a"
        lp = np.log(np.full((2, 2), 0.5))
        loss, _ = ctc_loss(lp, (1,))
        assert loss == pytest.approx(-math.log(0.75), abs=1e-15)

    def test_matches_brute_force(self, rng):
        for _ in range(300):
            T, K = int(rng.integers(1, 9)), int(rng.integers(2, 5))
            lp = random_emissions(rng, T, K, sharp=2.0)
            target = _random_target(rng, T, K)
            assert ctc_loss(lp, target)[0] == pytest.approx(brute_force_loss(lp, target), abs=1e-8)

    def test_infeasible(self):
        lp = np.log(np.full((2, 3), 1 / 3))
        with pytest.raises(InfeasibleTargetError):
            ctc_loss(lp, (1, 1))
        assert brute_force_loss(lp, (1, 1)) == math.inf

    def test_zero_probability_target(self):
        with np.errstate(divide="ignore"):
            lp = np.log(np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]]))
        loss, grad = ctc_loss(lp, (2,))
        assert loss == math.inf and not grad.any()

    def test_bad_targets(self):
        lp = np.log(np.full((3, 3), 1 / 3))
        with pytest.raises(InvalidParameterError):
            ctc_loss(lp, ())
        with pytest.raises(InvalidParameterError):
            ctc_loss(lp, (0,))
        with pytest.raises(InvalidParameterError):
            ctc_loss(lp, (3,))

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        T, K = int(rng.integers(1, 10)), int(rng.integers(2, 6))
        lp = random_emissions(rng, T, K, sharp=3.0)
        assert ctc_loss(lp, _random_target(rng, T, K))[0] >= 0.0

    def test_zero_loss_for_certain_path(self):
        path = [1, 0, 1, 1, 2]
        lp = np.full((5, 3), -np.inf)
        lp[np.arange(5), path] = 0.0
        loss, _ = ctc_loss(lp, (1, 1, 2))
        assert loss == 0.0

    def test_min_frames(self):
        assert min_frames((1, 2, 3)) == 3
        assert min_frames((1, 1, 2, 2)) == 6

    def test_sequence_log_prob_empty(self):
        lp = np.log(np.array([[0.25, 0.75], [0.5, 0.5]]))
        assert sequence_log_prob(lp, ()) == pytest.approx(math.log(0.125))


class TestGradient:
    def test_raw_partials_match_finite_differences(self, rng):
        h = 1e-5
        for _ in range(30):
            T, K = int(rng.integers(1, 7)), int(rng.integers(2, 5))
            lp = random_emissions(rng, T, K)
            target = _random_target(rng, T, K)
            _, grad = ctc_loss(lp, target)
            fd = np.zeros_like(lp)
            for t, k in itertools.product(range(T), range(K)):
                up, down = lp.copy(), lp.copy()
                up[t, k] += h
                down[t, k] -= h
                fd[t, k] = (ctc_loss(up, target)[0] - ctc_loss(down, target)[0]) / (2 * h)
            np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-8)

    def test_occupancy_rows_sum_to_one(self, rng):
        lp = random_emissions(rng, 7, 4)
        _, grad = ctc_loss(lp, (1, 2, 1))
        np.testing.assert_allclose(-grad.sum(axis=1), 1.0, atol=1e-12)

    def test_logit_gradient_sums_to_zero(self, rng):
        lp = random_emissions(rng, 6, 4)
        _, grad = ctc_loss(lp, (3, 2))
        np.testing.assert_allclose(logit_gradient(lp, grad).sum(axis=1), 0.0, atol=1e-12)


class TestCollapse:
    @given(st.lists(st.integers(min_value=0, max_value=4), max_size=40))
    def test_matches_loop_reference(self, path):
        assert collapse(path) == _loop_collapse(path, 0)

    def test_rules(self):
        assert collapse("GG-GEE--E", blank="-") == "GGEE"
        assert collapse([1, 1, 1]) == [1]
        assert collapse([1, 0, 1]) == [1, 1]
        assert collapse([0, 0]) == []

    @given(st.lists(st.integers(min_value=1, max_value=4), max_size=30))
    def test_idempotent_on_clean_sequences(self, seq):
        clean = [s for s, _ in itertools.groupby(seq)]
        assert collapse(clean) == clean
        assert collapse(collapse(seq)) == collapse(seq)


class TestGreedy:
    @given(st.lists(st.integers(min_value=0, max_value=4), min_size=1, max_size=40))
    def test_decodes_peaked_path(self, path):
        lp = np.full((len(path), 5), math.log(0.05))
        lp[np.arange(len(path)), path] = math.log(0.8)
        result = greedy_decode(lp)
        assert list(result.labels) == _loop_collapse(path, 0)
        np.testing.assert_array_equal(result.frame_path, path)
        assert result.log_prob == pytest.approx(len(path) * math.log(0.8))

    def test_ties_go_to_lowest_index(self):
        lp = np.log(np.array([[0.4, 0.4, 0.2]]))
        assert greedy_decode(lp).labels == ()

    def test_sequence_string(self):
        lp = np.log(np.array([[0.1, 0.1, 0.6, 0.1, 0.1], [0.1, 0.1, 0.1, 0.6, 0.1]]))
        assert greedy_decode(lp, CtcAlphabet()).sequence == "GE"


class TestBeam:
    def test_full_width_matches_exhaustive(self, rng):
        for _ in range(60):
            T, K = int(rng.integers(1, 7)), int(rng.integers(2, 5))
            lp = random_emissions(rng, T, K, sharp=2.0)
            labels, score = brute_force_best_sequence(lp)
            result = beam_decode(lp, _n_prefixes(T, K))
            assert result.labels == tuple(labels)
            assert result.log_prob == pytest.approx(score, abs=1e-10)

    def test_log_prob_is_exact(self, rng):
        lp = random_emissions(rng, 12, 4)
        result = beam_decode(lp, 3)
        assert result.log_prob == pytest.approx(sequence_log_prob(lp, result.labels), abs=1e-12)

    def test_full_width_dominates_narrow(self, rng):
        for _ in range(100):
            T, K = int(rng.integers(1, 7)), int(rng.integers(2, 5))
            lp = random_emissions(rng, T, K, sharp=2.0)
            full = beam_decode(lp, _n_prefixes(T, K)).log_prob
            for w in (1, 2, 3, 5):
                assert beam_decode(lp, w).log_prob <= full + 1e-12

    def test_width_is_not_monotone_per_instance(self):
        # pruned prefix search can lose the best sequence at a wider beam
        p = np.array([[0.422, 0.422, 0.155], [0.363, 0.147, 0.49], [0.782, 0.043, 0.175]])
        lp = np.log(p / p.sum(axis=1, keepdims=True))
        w1, w2, w3 = (beam_decode(lp, w) for w in (1, 2, 3))
        assert w1.labels == (2,) and w3.labels == (2,)
        assert w2.labels == (1, 2)
        assert w2.log_prob < w1.log_prob

    def test_mean_log_prob_non_decreasing_in_width(self, rng):
        instances = [random_emissions(rng, int(rng.integers(3, 8)), 4, sharp=1.5) for _ in range(150)]
        means = [np.mean([beam_decode(lp, w).log_prob for lp in instances]) for w in (1, 2, 4, 8)]
        assert all(b >= a - 1e-12 for a, b in zip(means, means[1:]))

    def test_greedy_never_beats_full_beam(self, rng):
        for _ in range(100):
            T, K = int(rng.integers(1, 7)), int(rng.integers(2, 5))
            lp = random_emissions(rng, T, K, sharp=2.0)
            g = greedy_decode(lp)
            assert sequence_log_prob(lp, g.labels) <= beam_decode(lp, _n_prefixes(T, K)).log_prob + 1e-12

    def test_bad_width(self):
        with pytest.raises(InvalidParameterError):
            beam_decode(np.log(np.full((2, 2), 0.5)), 0)


class TestForcedAlign:
    def test_path_collapses_to_labels(self, rng):
        for _ in range(100):
            T, K = int(rng.integers(1, 12)), int(rng.integers(2, 6))
            lp = random_emissions(rng, T, K)
            target = _random_target(rng, T, K)
            path = forced_align(lp, target)
            assert len(path) == T
            assert tuple(collapse(list(path))) == target

    def test_path_is_best_alignment(self, rng):
        for _ in range(40):
            T, K = int(rng.integers(1, 7)), int(rng.integers(2, 4))
            lp = random_emissions(rng, T, K, sharp=2.0)
            target = _random_target(rng, T, K)
            best = max(
                sum(lp[t, s] for t, s in enumerate(p))
                for p in itertools.product(range(K), repeat=T)
                if tuple(collapse(list(p))) == target
            )
            path = forced_align(lp, target)
            assert lp[np.arange(T), path].sum() == pytest.approx(best, abs=1e-12)

    def test_with_frame_path(self, rng):
        lp = random_emissions(rng, 8, 4)
        r = with_frame_path(lp, beam_decode(lp, 4))
        assert tuple(collapse(list(r.frame_path))) == r.labels

    def test_infeasible(self):
        with pytest.raises(InfeasibleTargetError):
            forced_align(np.log(np.full((1, 2), 0.5)), (1, 1))


def test_oracle_guard():
    with pytest.raises(OracleTooLargeError):
        brute_force_loss(np.log(np.full((11, 2), 0.5)), (1,))
