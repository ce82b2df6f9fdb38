import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from crowdweight import crowd
from crowdweight.dataset import MultiLabelDataset
from crowdweight.simulate import (
    SimulationSpec,
    base_scores,
    flip_probability_score,
    normalize_scores,
    simulate_labels,
    simulate_noisy_labels,
)
from grid_labels import ROWS


class TestNormalize:
    def test_divides_by_max_abs(self):
        np.testing.assert_allclose(normalize_scores([-2.0, 1.0]), [-1.0, 0.5])

    def test_zero_vector(self):
        np.testing.assert_array_equal(normalize_scores([0.0, 0.0]), [0.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30))
    def test_monotone_and_bounded(self, f):
        f = np.array(f)
        g = normalize_scores(f)
        assert np.all(np.abs(g) <= 1.0)
        i, j = np.argsort(f, kind="stable")[[0, -1]]
        assert g[i] <= g[j]
        order = np.argsort(f, kind="stable")
        assert np.all(np.diff(g[order]) >= 0)


class TestFlipScore:
    def test_zero_score_is_one(self):
        for p in (0.1, 1.0, 7.0):
            assert flip_probability_score(0.0, p) == pytest.approx(1.0)

    @pytest.mark.parametrize("f, printed", [(-1.0, 0.15), (0.5, 0.45)])
    def test_printed_values(self, f, printed):
        assert abs(flip_probability_score(f, 1.0) - printed) <= 0.005

    def test_decreasing_in_abs(self):
        f = np.linspace(0, 1, 50)
        assert np.all(np.diff(flip_probability_score(f, 1.0)) < 0)
        np.testing.assert_allclose(flip_probability_score(-f, 1.0), flip_probability_score(f, 1.0))


def _grid_ds(m=200, seed=0):
    f = np.linspace(-1, 1, m)
    y = np.where(f >= 0, 1, -1)
    return f, MultiLabelDataset(f[:, None], np.ones((m, 1)), y)


class TestSimulateLabels:
    def test_roles_and_shapes(self):
        f, ds = _grid_ds()
        out = simulate_labels(ds, f, SimulationSpec(p=1.0, seed=4))
        assert out.num_annotators == 12
        np.testing.assert_array_equal(out.annotator_labels[:, 10], ds.true_labels)
        np.testing.assert_array_equal(out.annotator_labels[:, 11], -ds.true_labels)
        assert set(np.unique(out.annotator_labels)) <= {-1, 1}

    def test_seed_determinism(self):
        f, ds = _grid_ds()
        a = simulate_labels(ds, f, SimulationSpec(seed=11))
        b = simulate_labels(ds, f, SimulationSpec(seed=11))
        np.testing.assert_array_equal(a.annotator_labels, b.annotator_labels)

    def test_large_p_is_noiseless_off_boundary(self):
        f, ds = _grid_ds()
        out = simulate_labels(ds, f, SimulationSpec(p=100.0, seed=2))
        off = np.abs(f) > 0.05
        noisy = out.annotator_labels[:, :10]
        assert np.all(noisy[off] == ds.true_labels[off, None])

    def test_missing_truth(self):
        ds = MultiLabelDataset(np.ones((2, 1)), np.ones((2, 1)))
        with pytest.raises(ValueError):
            simulate_labels(ds, np.zeros(2), SimulationSpec())

    def test_per_label_flip_rate_monte_carlo(self):
        # before the mass flip each label flips with probability ft/2 = 0.0759 at f=-1, p=1
        rng = np.random.default_rng(0)
        ft = flip_probability_score(-1.0, 1.0)
        y = -np.ones(10_000, dtype=np.int8)
        flips = rng.random((10_000, 10)) < ft / 2
        observed = flips.mean()
        assert abs(observed - ft / 2) < 4 * np.sqrt(ft / 2 * (1 - ft / 2) / 100_000)
        # and the full simulator: the rate of wrong labels among rows that were not mass-flipped
        labels = simulate_noisy_labels(y, -np.ones(10_000), 1.0, 10, np.random.default_rng(1))
        wrong = labels != -1
        kept = wrong.sum(axis=1) < 5
        assert abs(wrong[kept].mean() - ft / 2) < 0.01

    def test_mass_flip_with_certainty(self):
        # ft = 1 at f = 0: after step one, a truthful majority is always flipped wholesale
        y = np.ones(5000, dtype=np.int8)
        labels = simulate_noisy_labels(y, np.zeros(5000), 1.0, 10, np.random.default_rng(3))
        agree = (labels == 1).sum(axis=1)
        assert np.all(agree <= 5)

    def test_ties_do_not_mass_flip(self):
        class Fixed:
            def __init__(self):
                self.calls = 0

            def random(self, shape):
                self.calls += 1
                if self.calls == 1:  # per-label draws: flip exactly the first 5 labels
                    out = np.ones(shape)
                    out[:, :5] = 0.0
                    return out
                return np.zeros(shape)  # mass-flip draw would always succeed

        labels = simulate_noisy_labels(np.ones(3, dtype=np.int8), np.zeros(3), 1.0, 10, Fixed())
        assert np.all((labels == 1).sum(axis=1) == 5)

    def test_disagreement_decreases_with_distance(self):
        f = np.linspace(-1, 1, 2001)
        y = np.where(f >= 0, 1, -1)
        out = simulate_labels(f[:, None], f, SimulationSpec(p=1.0, include_perfect=False,
                                                            include_adversarial=False, seed=8), y)
        d = crowd.disagreement(out.annotator_labels)
        rho, _ = spearmanr(np.abs(f), d)
        # permutation test for the rank correlation
        rng = np.random.default_rng(0)
        null = [spearmanr(np.abs(f), rng.permutation(d))[0] for _ in range(200)]
        assert rho < 0
        assert rho < np.min(null)


def test_grid_disagreements_exact():
    for f, _, _, labels, d in ROWS:
        assert crowd.disagreement(labels) == d, f


def test_base_scores_normalized():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    y = np.where(X[:, 0] > 0, 1, -1)
    s = base_scores(X, y)
    assert np.max(np.abs(s)) == pytest.approx(1.0)
    assert np.mean(np.sign(s) == y) > 0.8
