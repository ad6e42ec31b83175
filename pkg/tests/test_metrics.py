import numpy as np
import pytest

from longdina.errors import DimensionError
from longdina.metrics import aar, mae, mc_error, mc_error_proportion, psrf, psrf_lower_bound, rmse


class TestMaeRmse:
    def test_symmetric_errors(self):
        assert mae([0.1, 0.3], 0.2) == pytest.approx(0.1)
        assert rmse([0.1, 0.3], 0.2) == pytest.approx(0.1)

    def test_exact_estimates(self):
        assert mae([0.4, 0.4, 0.4], 0.4) == 0.0
        assert rmse([0.4, 0.4, 0.4], 0.4) == 0.0

    def test_hand_arithmetic(self):
        # errors (-0.1, 0.3): MAE 0.2, RMSE sqrt(0.05)
        assert mae([0.0, 0.4], 0.1) == pytest.approx(0.2)
        assert rmse([0.0, 0.4], 0.1) == pytest.approx(np.sqrt(0.05))

    def test_rmse_dominates_mae(self, rng):
        for _ in range(200):
            estimates = rng.normal(size=rng.integers(1, 20))
            truth = float(rng.normal())
            assert rmse(estimates, truth) >= mae(estimates, truth) - 1e-15

    def test_replication_order_invariance(self, rng):
        estimates = rng.normal(size=15)
        perm = rng.permutation(15)
        assert mae(estimates, 0.3) == pytest.approx(mae(estimates[perm], 0.3), abs=1e-15)
        assert rmse(estimates, 0.3) == pytest.approx(rmse(estimates[perm], 0.3), abs=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(DimensionError):
            mae([], 0.0)


class TestAar:
    def test_perfect_recovery(self, rng):
        truth = rng.integers(0, 2, (30, 2, 2))
        np.testing.assert_allclose(aar(truth, truth), 1.0)

    def test_complement_gives_zero(self, rng):
        truth = rng.integers(0, 2, (30, 2, 2))
        np.testing.assert_allclose(aar(1 - truth, truth), 0.0)

    def test_constructed_half_flip(self):
        truth = np.zeros((10, 1, 2), dtype=int)
        est = truth.copy()
        est[:5, 0, 0] = 1  # flip attribute 1 for half the learners
        rates = aar(est, truth)
        assert rates[0, 0] == pytest.approx(0.5)
        assert rates[1, 0] == pytest.approx(1.0)

    def test_replication_stack(self, rng):
        truth = rng.integers(0, 2, (20, 2, 2))
        est = np.stack([truth, 1 - truth])  # one perfect, one complement
        np.testing.assert_allclose(aar(est, np.stack([truth, truth])), 0.5)

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            aar(np.zeros((3, 2, 2)), np.zeros((4, 2, 2)))


class TestPsrf:
    def test_iid_chains_near_one(self, rng):
        chains = rng.normal(size=(2, 10_000))
        value = psrf(chains)
        assert 0.95 < value < 1.05

    def test_disjoint_chains_diverge(self, rng):
        a = np.zeros(500) + rng.normal(0, 1e-3, 500)
        b = np.ones(500) + rng.normal(0, 1e-3, 500)
        assert psrf(np.stack([a, b])) > 1.2

    def test_chain_label_permutation(self, rng):
        chains = rng.normal(size=(3, 200))
        assert psrf(chains) == pytest.approx(psrf(chains[::-1]), abs=1e-14)

    def test_lower_bound(self, rng):
        for _ in range(100):
            chains = rng.normal(size=(2, 50))
            assert psrf(chains) >= psrf_lower_bound(50) - 1e-12

    def test_identical_constant_chains(self):
        chains = np.full((2, 100), 2.0)  # exactly representable: variance is exactly 0
        assert psrf(chains) == 1.0

    def test_requires_two_chains(self, rng):
        with pytest.raises(DimensionError):
            psrf(rng.normal(size=(1, 100)))


class TestMcError:
    def test_matches_paper_coverage_error(self):
        # 0.95 coverage over 100 replications -> about 0.02
        assert mc_error_proportion(0.95, 100) == pytest.approx(0.0218, abs=1e-4)

    def test_constant_values(self):
        assert mc_error([2.0, 2.0, 2.0]) == 0.0

    def test_hand_arithmetic(self):
        assert mc_error([0, 0, 1, 1]) == pytest.approx(0.25)

    def test_proportion_consistency(self):
        values = [0, 0, 1, 1]
        assert mc_error(values) == pytest.approx(mc_error_proportion(0.5, 4))
