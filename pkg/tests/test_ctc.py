import math

import numpy as np
import pytest

from cerhv.ctc import (
    Alphabet,
    InfeasibleTargetError,
    brute_force_ctc,
    brute_force_target_distribution,
    collapse,
    ctc_gradient,
    ctc_log_likelihood,
    greedy_decode,
    required_frames,
    validate_log_probs,
)

AB = Alphabet.of("ab")
A = Alphabet.of("a")


def random_log_probs(rng, T, K):
    """Row-normalized random log-probabilities."""
    z = rng.standard_normal((T, K))
    z = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return z


def random_target(rng, alphabet, max_len):
    n = int(rng.integers(0, max_len + 1))
    return "".join(rng.choice(list(alphabet.symbols)) for _ in range(n))


class TestAlphabet:
    def test_blank_is_extended_index_zero(self):
        assert AB.blank_index == 0
        assert AB.extended_size == 3
        assert AB.encode("ab") == [1, 2]

    def test_rejects_duplicate_symbols(self):
        with pytest.raises(ValueError):
            Alphabet.of("aa")

    def test_encode_rejects_unknown(self):
        with pytest.raises(ValueError):
            AB.encode("x")


class TestCollapse:
    def test_merges_repeats_then_drops_blanks(self):
        assert collapse([1, 1, 0, 2], AB) == "ab"

    def test_all_blank(self):
        assert collapse([0, 0, 0], AB) == ""

    def test_blank_separates_repeats(self):
        assert collapse([1, 0, 1], AB) == "aa"

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            collapse([3], AB)


class TestLogLikelihood:
    def test_single_frame_single_path(self):
        lp = np.log([[0.4, 0.6]])
        assert ctc_log_likelihood(lp, "a", A) == pytest.approx(math.log(0.6))

    def test_two_frames_uniform(self):
        # 4 paths, 3 of which collapse to "a"
        lp = np.log(np.full((2, 2), 0.5))
        assert ctc_log_likelihood(lp, "a", A) == pytest.approx(math.log(0.75))

    def test_infeasible_target_is_neg_inf(self):
        lp = np.log([[0.4, 0.6]])
        assert ctc_log_likelihood(lp, "aa", A) == float("-inf")
        assert required_frames("aa") == 3

    def test_empty_target_is_product_of_blanks(self):
        lp = np.log(np.array([[0.3, 0.7], [0.2, 0.8]]))
        assert ctc_log_likelihood(lp, "", A) == pytest.approx(math.log(0.3 * 0.2))

    def test_out_of_alphabet_raises(self):
        lp = np.log([[0.4, 0.6]])
        with pytest.raises(ValueError):
            ctc_log_likelihood(lp, "z", A)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            T = int(rng.integers(1, 7))
            alphabet = Alphabet.of("abc"[: int(rng.integers(1, 4))])
            lp = random_log_probs(rng, T, alphabet.extended_size)
            target = random_target(rng, alphabet, 4)
            got = math.exp(ctc_log_likelihood(lp, target, alphabet))
            want = brute_force_ctc(lp, target, alphabet)
            assert abs(got - want) <= 1e-10


class TestBruteForce:
    def test_refuses_large_instances(self):
        lp = np.zeros((9, 2))
        with pytest.raises(ValueError):
            brute_force_ctc(lp, "a", A)

    def test_infeasible_target_is_zero(self):
        lp = np.log([[0.4, 0.6]])
        assert brute_force_ctc(lp, "aa", A) == 0.0

    def test_paths_partition_probability_mass(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            T = int(rng.integers(1, 6))
            alphabet = Alphabet.of("ab"[: int(rng.integers(1, 3))])
            lp = random_log_probs(rng, T, alphabet.extended_size)
            dist = brute_force_target_distribution(lp, alphabet)
            assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)


class TestGradient:
    def test_single_frame_is_softmax_minus_onehot(self):
        z = np.array([[0.3, -1.2]])
        probs = np.exp(z - np.log(np.exp(z).sum(axis=1, keepdims=True)))
        want = probs - np.array([[0.0, 1.0]])
        got = ctc_gradient(z, "a", A)
        assert np.allclose(got, want, atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        h = 1e-4
        for _ in range(30):
            T = int(rng.integers(2, 6))
            alphabet = Alphabet.of("abc"[: int(rng.integers(1, 4))])
            K = alphabet.extended_size
            z = rng.standard_normal((T, K))
            target = random_target(rng, alphabet, 2)
            if required_frames(target) > T:
                continue
            got = ctc_gradient(z, target, alphabet)
            fd = np.zeros_like(z)
            for t in range(T):
                for k in range(K):
                    zp, zm = z.copy(), z.copy()
                    zp[t, k] += h
                    zm[t, k] -= h
                    lp_p = zp - np.log(np.exp(zp).sum(axis=1, keepdims=True))
                    lp_m = zm - np.log(np.exp(zm).sum(axis=1, keepdims=True))
                    fd[t, k] = (
                        -ctc_log_likelihood(lp_p, target, alphabet)
                        + ctc_log_likelihood(lp_m, target, alphabet)
                    ) / (2 * h)
            scale = max(1.0, float(np.max(np.abs(fd))))
            assert np.max(np.abs(got - fd)) / scale < 1e-4

    def test_infeasible_target_raises(self):
        with pytest.raises(InfeasibleTargetError):
            ctc_gradient(np.zeros((1, 2)), "aa", A)

    def test_per_frame_shift_invariance(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((4, 3))
        shifted = z + rng.standard_normal((4, 1))
        g1 = ctc_gradient(z, "ab", AB)
        g2 = ctc_gradient(shifted, "ab", AB)
        assert np.max(np.abs(g1 - g2)) <= 1e-9


class TestGreedyDecode:
    def test_one_hot_frames(self):
        lp = np.log(
            np.array(
                [
                    [0.0001, 0.9998, 0.0001],
                    [0.0001, 0.9998, 0.0001],
                    [0.9998, 0.0001, 0.0001],
                    [0.0001, 0.0001, 0.9998],
                ]
            )
        )
        assert greedy_decode(lp, AB) == "ab"

    def test_all_blank(self):
        lp = np.log(np.tile([0.8, 0.1, 0.1], (3, 1)))
        assert greedy_decode(lp, AB) == ""

    def test_tie_breaks_toward_blank(self):
        lp = np.log(np.array([[0.5, 0.5]]))
        assert greedy_decode(lp, A) == ""

    def test_shift_invariance_on_logits(self):
        rng = np.random.default_rng(9)
        z = rng.standard_normal((6, 3))
        shifted = z + 3.7
        assert greedy_decode(z, AB) == greedy_decode(shifted, AB)

    def test_deterministic(self):
        rng = np.random.default_rng(13)
        lp = random_log_probs(rng, 8, 3)
        assert greedy_decode(lp, AB) == greedy_decode(lp, AB)


class TestValidate:
    def test_accepts_normalized_rows(self):
        rng = np.random.default_rng(1)
        validate_log_probs(random_log_probs(rng, 4, 3), AB)

    def test_rejects_bad_rows(self):
        with pytest.raises(ValueError):
            validate_log_probs(np.zeros((2, 3)), AB)

    def test_rejects_wrong_class_count(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValueError):
            validate_log_probs(random_log_probs(rng, 4, 2), AB)
