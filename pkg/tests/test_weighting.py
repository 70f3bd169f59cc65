import numpy as np
import pytest

from fapsm import (
    NoCandidatesError,
    NumericalError,
    PatchWeights,
    StoreError,
    ValidationError,
    decision_matrix,
    final_identity,
    fit_weights,
    l1_objective,
    load_weights,
    save_weights,
)


def grid_search_m2(H, lam, step=1e-3, hi=2.0):
    """Brute-force grid minimizer of the augmented objective for m = 2."""
    Hp = np.vstack([H, np.ones((1, 2))])
    ep = np.ones(Hp.shape[0])
    A = Hp.T @ Hp
    b = Hp.T @ ep
    c = float(ep @ ep)
    g = np.arange(0.0, hi + step / 2, step)
    q1, q2 = np.meshgrid(g, g, indexing="ij")
    f = (
        A[0, 0] * q1**2 + 2 * A[0, 1] * q1 * q2 + A[1, 1] * q2**2
        - 2 * (b[0] * q1 + b[1] * q2) + c + lam * (q1 + q2)
    )
    i, j = np.unravel_index(np.argmin(f), f.shape)
    return np.array([g[i], g[j]]), float(f[i, j])


class TestDecisionMatrix:
    def test_all_correct(self):
        G = np.array([[2, 2], [3, 3]])
        H = decision_matrix(G, np.array([2, 3]))
        assert np.array_equal(H, np.ones((2, 2)))

    def test_rejected_patch_counts_as_incorrect(self):
        H = decision_matrix(np.array([[-1]]), np.array([5]))
        assert H[0, 0] == -1.0

    def test_mixed_row(self):
        H = decision_matrix(np.array([[2, 3, -1]]), np.array([2]))
        assert list(H[0]) == [1.0, -1.0, -1.0]

    def test_entries_exactly_pm_one(self, rng):
        G = rng.integers(-1, 4, size=(30, 5))
        truth = rng.integers(1, 4, size=30)
        H = decision_matrix(G, truth)
        assert set(np.unique(H)) <= {-1.0, 1.0}


class TestFitWeights:
    def test_single_patch_closed_form(self):
        n = 12
        H = np.ones((n, 1))
        lam = 0.05
        q = fit_weights(H, lam).weights
        expected = (2.0 * (n + 1) - lam) / (2.0 * (n + 1))
        assert q[0] == pytest.approx(expected, abs=1e-9)

    def test_reliable_patch_outweighs_unreliable(self):
        n = 20
        H = np.column_stack([np.ones(n), -np.ones(n)])
        q = fit_weights(H, 0.01).weights
        q_grid, f_grid = grid_search_m2(H, 0.01)
        assert q[0] > q[1]
        assert q[1] == pytest.approx(0.0, abs=1e-6)
        assert np.max(np.abs(q - q_grid)) <= 2e-3
        assert l1_objective(H, q, 0.01) <= f_grid + 1e-9

    def test_full_shrinkage_reported(self):
        H = np.ones((5, 2))
        lam = 1000.0  # beyond the 2 (n+1) max correlation scale
        with pytest.raises(NumericalError):
            fit_weights(H, lam)

    def test_objective_beats_random_feasible_perturbations(self, rng):
        H = np.where(rng.random((15, 4)) < 0.7, 1.0, -1.0)
        lam = 0.01
        q = fit_weights(H, lam).weights
        f0 = l1_objective(H, q, lam)
        for _ in range(1000):
            delta = rng.uniform(-1e-3, 1e-3, size=4)
            delta = np.maximum(delta, -q)  # stay feasible
            assert l1_objective(H, q + delta, lam) >= f0 - 1e-12

    def test_patch_permutation_symmetry(self, rng):
        H = np.where(rng.random((12, 5)) < 0.6, 1.0, -1.0)
        perm = np.array([3, 0, 4, 1, 2])
        q = fit_weights(H, 0.01).weights
        q_perm = fit_weights(H[:, perm], 0.01).weights
        assert np.allclose(q_perm, q[perm], atol=1e-8)

    def test_nonpositive_lambda_rejected(self):
        with pytest.raises(ValidationError):
            fit_weights(np.ones((3, 2)), 0.0)


class TestFinalIdentity:
    def test_single_candidate(self):
        w = PatchWeights(np.array([1.0]), 0.01)
        u, s = final_identity(np.array([5]), np.array([0.9]), w)
        assert u == 5 and s == pytest.approx(0.9)

    def test_weighted_vote_arithmetic(self):
        w = PatchWeights(np.array([0.5, 0.3, 0.2]), 0.01)
        g = np.array([1, 2, 1])
        y = np.array([0.8, 0.9, 0.7])
        u, s = final_identity(g, y, w)
        # vote(1) = 0.5*0.8 + 0.2*0.7 = 0.54, vote(2) = 0.27
        assert u == 1 and s == pytest.approx(0.54)

    def test_baseline_vote_can_flip_winner(self):
        w = PatchWeights(np.array([0.5, 0.3, 0.2]), 0.01)
        g = np.array([1, 2, 1])
        y = np.array([0.8, 0.9, 0.7])
        u, s = final_identity(g, y, w, baseline=(2, 0.5))
        assert u == 2 and s == pytest.approx(0.77)

    def test_rejected_patches_do_not_vote(self):
        w = PatchWeights(np.array([0.5, 0.5]), 0.01)
        u, s = final_identity(np.array([-1, 4]), np.array([10.0, 0.2]), w)
        assert u == 4 and s == pytest.approx(0.1)

    def test_all_rejected_with_baseline(self):
        w = PatchWeights(np.array([1.0, 1.0]), 0.01)
        u, s = final_identity(np.array([-1, -1]), np.zeros(2), w, baseline=(3, 0.6))
        assert u == 3 and s == pytest.approx(0.6)

    def test_no_candidates_error(self):
        w = PatchWeights(np.array([1.0]), 0.01)
        with pytest.raises(NoCandidatesError):
            final_identity(np.array([-1]), np.array([0.5]), w)

    def test_tie_breaks_to_smaller_identity(self):
        w = PatchWeights(np.array([0.5, 0.5]), 0.01)
        u, _ = final_identity(np.array([7, 2]), np.array([0.6, 0.6]), w)
        assert u == 2

    def test_uniform_scaling_of_q_preserves_argmax(self, rng):
        for _ in range(25):
            m = 5
            q = rng.random(m) + 0.01
            g = rng.integers(1, 4, size=m)
            y = rng.random(m)
            u1, _ = final_identity(g, y, PatchWeights(q, 0.01))
            u2, _ = final_identity(g, y, PatchWeights(q * 7.3, 0.01))
            assert u1 == u2


class TestWeightsPersistence:
    def test_round_trip(self, tmp_path, rng):
        w = PatchWeights(rng.random(6) + 1e-6, 0.01)
        path = tmp_path / "weights.txt"
        save_weights(path, w)
        loaded = load_weights(path)
        assert np.array_equal(loaded.weights, w.weights)
        assert loaded.lambda2 == w.lambda2

    def test_bad_header(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("nope\n1.0\n")
        with pytest.raises(StoreError):
            load_weights(path)

    def test_all_zero_rejected(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("fapsm-weights v1 m=2 lambda2=0.01\n0.0,0.0\n")
        with pytest.raises(StoreError):
            load_weights(path)
