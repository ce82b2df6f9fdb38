import json

import numpy as np
import pytest
from scipy.stats import spearmanr

from crowdweight import harness, margin, simulate
from crowdweight.dataset import MultiLabelDataset
from oracles import expertise_grid


class TestKernel:
    def test_orthonormal_after_centering(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        K = margin.centered_kernel(X)
        np.testing.assert_allclose(np.diag(K), 1.0)
        assert K[0, 2] == 0.0 and K[0, 1] == -1.0

    def test_symmetric_psd_bounded(self, rng):
        K = margin.centered_kernel(rng.normal(size=(40, 5)))
        np.testing.assert_allclose(K, K.T)
        assert np.all(np.abs(K) <= 1 + 1e-12)
        assert np.linalg.eigvalsh(K).min() > -1e-10

    def test_duplicates(self, rng):
        X = rng.normal(size=(5, 3))
        X[3] = X[1]
        K = margin.centered_kernel(X)
        np.testing.assert_array_equal(K[1], K[3])


class TestExpertise:
    def test_exact_fit_single_annotator(self):
        y = np.array([1.0, -1, 1, -1])
        fit = margin.fit_expertise(y[:, None], K=np.outer(y, y))
        assert fit.z[0] == pytest.approx(1.0)

    def test_feature_shortcut_matches_kernel(self, rng):
        X = rng.normal(size=(30, 4))
        Y = rng.choice([-1, 1], size=(30, 5))
        a = margin.estimate_expertise(margin.centered_kernel(X), Y)
        b = margin.fit_expertise(Y, X=X).z
        np.testing.assert_allclose(a, b, atol=1e-8)

    def test_box_and_monotone_objective(self, rng):
        X = rng.normal(size=(50, 3))
        Y = rng.choice([-1, 1], size=(50, 6))
        fit = margin.fit_expertise(Y, X=X, z0=np.full(6, 0.9))
        assert np.all((fit.z >= 0) & (fit.z <= 1))
        tr = np.array(fit.objective_trace)
        assert np.all(np.diff(tr) <= 1e-12 * np.abs(tr[:-1]))

    def test_scaled_objective_agrees_with_direct(self, rng):
        X = rng.normal(size=(20, 3))
        Y = rng.choice([-1, 1], size=(20, 4))
        K = margin.centered_kernel(X)
        fit = margin.fit_expertise(Y, K=K)
        assert fit.objective_trace[-1] * 400 == pytest.approx(margin.expertise_objective(K, Y, fit.z))

    def test_matches_grid_search(self, rng):
        checked = 0
        while checked < 10:
            X = rng.normal(size=(6, 2))
            Y = rng.choice([-1, 1], size=(6, 3))
            # a singular label Gram leaves the minimizer non-unique
            if np.linalg.eigvalsh((Y.T @ Y) ** 2).min() < 1e-9:
                continue
            K = margin.centered_kernel(X)
            z = margin.estimate_expertise(K, Y)
            z_grid, _ = expertise_grid(K, Y, 0.01)
            assert np.max(np.abs(z - z_grid)) <= 0.02
            checked += 1

    def test_simulated_experts_rank_higher(self):
        rhos = []
        for rep in range(10):
            X, y = harness.gen_gaussian_dataset(rep, m=400)
            base = simulate.base_scores(X, y)
            ds = simulate.simulate_labels(X, base, simulate.SimulationSpec(p=1, seed=rep), y)
            z = margin.fit_expertise(ds.annotator_labels, X=X).z
            error_rate = np.mean(ds.annotator_labels != y[:, None], axis=0)
            rhos.append(spearmanr(z, error_rate)[0])
        assert np.mean(rhos) < 0


class TestConsensus:
    def test_majority(self):
        row = np.array([[1] * 7 + [-1] * 3])
        assert margin.consensus_sign(row, np.ones(10))[0] == 1

    def test_single_annotator(self, rng):
        Y = rng.choice([-1, 1], size=(20, 4))
        np.testing.assert_array_equal(margin.consensus_sign(Y, [0, 0, 1, 0]), Y[:, 2])

    def test_tie_and_zero(self):
        assert margin.consensus_sign(np.array([[1, -1]]), [1, 1])[0] == 1
        with pytest.raises(ValueError):
            margin.consensus_sign(np.array([[1, -1]]), [0, 0])

    def test_loop_oracle(self, rng):
        Y = rng.choice([-1, 1], size=(30, 5))
        z = rng.random(5)
        expect = [1 if sum(z[l] * Y[i, l] for l in range(5)) >= 0 else -1 for i in range(30)]
        np.testing.assert_array_equal(margin.consensus_sign(Y, z), expect)


class TestRadius:
    def test_perfect_annotator_zero(self, rng):
        X = rng.normal(size=(25, 2))
        yh = rng.choice([-1, 1], 25)
        assert margin.estimate_radius(X, yh, yh[:, None], 0) == 0.0

    def test_constant_annotator_covers_everything(self):
        x = np.arange(10.0)[:, None]
        yh = np.array([1, -1, 1, -1, 1, -1, 1, 1, -1, 1])
        assert margin.estimate_radius(x, yh, np.ones((10, 1)), 0) == 9.0

    def test_exhaustive_optimality(self, rng):
        X = rng.normal(size=(15, 2))
        yh = rng.choice([-1, 1], 15)
        A = rng.choice([-1, 1], size=(15, 3))
        radii = margin.estimate_radii(X, yh, A)
        _, cand = margin.radius_candidates(X)
        for l in range(3):
            direct = [margin.radius_objective(X, yh, A[:, l], r) for r in cand]
            best = margin.radius_objective(X, yh, A[:, l], radii[l])
            assert best <= min(direct) + 1e-9
            first = cand[np.argmax(np.isclose(direct, min(direct), rtol=1e-9, atol=1e-9))]
            assert radii[l] == first


class TestMarginBound:
    def test_all_agree(self):
        assert margin.margin_lower_bound([1, 1, 1], 1, [0.1, 0.5, 0.3]) == 0.5

    def test_only_largest_disagrees(self):
        assert margin.margin_lower_bound([1, -1, 1], 1, [0.1, 0.5, 0.3]) == 0.5

    def test_smallest_disagrees(self):
        assert margin.margin_lower_bound([-1, 1, 1], 1, [0.0, 0.5, 0.3]) == 0.0

    def test_monotone_in_first_disagreeing_radius(self, rng):
        for _ in range(200):
            radii = rng.uniform(0, 1, 6)
            row = rng.choice([-1, 1], 6)
            g0 = margin.margin_lower_bound(row, 1, radii)
            wrong = [l for l in np.argsort(radii, kind="stable") if row[l] != 1]
            if not wrong:
                continue
            bigger = radii.copy()
            bigger[wrong[0]] += rng.uniform(0, 1)
            assert margin.margin_lower_bound(row, 1, bigger) >= g0

    def test_valid_against_true_geometry(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            X = rng.uniform(-1, 1, size=(200, 2))
            y = np.where(X[:, 0] >= 0, 1, -1)
            spec = simulate.SimulationSpec(p=5, include_perfect=False, include_adversarial=False, seed=seed)
            est = margin.estimate_margins(simulate.simulate_labels(X, X[:, 0], spec, y))
            assert np.mean(est.margin_lb <= np.abs(X[:, 0])) >= 0.8


def test_estimate_json_roundtrip(rng):
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 0] >= 0, 1, -1)
    A = np.tile(y[:, None], (1, 3))
    A[:5, 2] *= -1
    est = margin.estimate_margins(MultiLabelDataset(X, A, y))
    d = json.loads(est.to_json())
    assert {"z", "radii", "margins"} <= set(d)
    back = margin.MarginEstimate.from_dict(d)
    np.testing.assert_array_equal(back.margin_lb, est.margin_lb)
    assert np.all(est.margin_lb >= 0)
