import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbmdetect import scoring
from sbmdetect.model import ModelError

from oracles import brute_force_overlap


class TestHardAssign:
    def test_one_hot(self):
        m = np.eye(3)[[2, 0, 1]]
        assert scoring.hard_assign(m).tolist() == [2, 0, 1]

    def test_uniform_ties_go_low(self):
        m = np.full((4, 3), 1 / 3)
        assert scoring.hard_assign(m).tolist() == [0, 0, 0, 0]

    def test_plain_argmax(self):
        assert scoring.hard_assign([[0.2, 0.5, 0.3]]).tolist() == [1]


class TestOverlap:
    def test_identical(self):
        labels = np.array([0, 1, 2, 0, 1, 2])
        assert scoring.overlap(labels, labels, 3) == 1.0

    def test_permuted(self):
        planted = np.array([0, 1, 2, 0, 1, 2])
        mapped = np.array([1, 2, 0, 1, 2, 0])
        assert scoring.overlap(planted, mapped, 3) == 1.0

    def test_constant_label_equal_thirds(self):
        planted = np.repeat([0, 1, 2], 5)
        inferred = np.zeros(15, dtype=int)
        assert scoring.overlap(planted, inferred, 3) == pytest.approx(1 / 3)

    def test_out_of_range(self):
        with pytest.raises(ModelError):
            scoring.overlap([0, 1], [0, 3], 3)

    def test_constant_label_matches_chance_of_largest(self):
        planted = np.array([0] * 6 + [1] * 3 + [2] * 3)
        inferred = np.full(12, 2)
        got = scoring.overlap(planted, inferred, 3)
        assert got == pytest.approx(scoring.chance_baseline([0.5, 0.25, 0.25]))

    @given(st.integers(2, 5), st.integers(10, 60), st.integers(0, 2**30))
    @settings(max_examples=100, deadline=None)
    def test_matches_brute_force(self, q, n, seed):
        rng = np.random.default_rng(seed)
        planted = rng.integers(0, q, n)
        inferred = rng.integers(0, q, n)
        assert scoring.overlap(planted, inferred, q) == pytest.approx(
            brute_force_overlap(planted, inferred, q), abs=1e-12
        )

    @given(st.integers(2, 5), st.integers(0, 2**30))
    @settings(max_examples=60, deadline=None)
    def test_relabeling_invariance(self, q, seed):
        rng = np.random.default_rng(seed)
        planted = rng.integers(0, q, 40)
        inferred = rng.integers(0, q, 40)
        base = scoring.overlap(planted, inferred, q)
        perm = rng.permutation(q)
        assert scoring.overlap(perm[planted], inferred, q) == pytest.approx(base)
        assert scoring.overlap(planted, perm[inferred], q) == pytest.approx(base)


class TestBruteForceEquivalenceBulk:
    def test_500_random_instances(self):
        rng = np.random.default_rng(99)
        for _ in range(500):
            q = int(rng.integers(2, 6))
            n = int(rng.integers(5, 40))
            planted = rng.integers(0, q, n)
            inferred = rng.integers(0, q, n)
            assert scoring.overlap(planted, inferred, q) == pytest.approx(
                brute_force_overlap(planted, inferred, q), abs=1e-12
            )


class TestChance:
    def test_thirds(self):
        assert scoring.chance_baseline([1 / 3, 1 / 3, 1 / 3]) == pytest.approx(1 / 3)

    def test_halves(self):
        assert scoring.chance_baseline([0.5, 0.5]) == 0.5

    def test_skewed(self):
        assert scoring.chance_baseline([0.25, 0.5, 0.25]) == 0.5


class TestConfusion:
    def test_total(self):
        planted = np.array([0, 0, 1, 2])
        inferred = np.array([1, 0, 1, 2])
        counts = scoring.confusion_matrix(planted, inferred, 3)
        assert counts.sum() == 4
        assert counts[0, 1] == 1 and counts[0, 0] == 1
