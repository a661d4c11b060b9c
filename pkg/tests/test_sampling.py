import math

import numpy as np
import pytest

from gauss_tomo import (
    AngleProtocol,
    CovMat,
    DetectionModel,
    InvalidProtocol,
    RaggedDataset,
    StateSpec,
    marginal_variance,
    sample_heterodyne,
    sample_homodyne,
    thermalize_heterodyne,
    thermalize_homodyne,
    to_heterodyne_cov,
    to_homodyne_cov,
    wigner_cov,
)
from gauss_tomo.sampling import (
    SAMPLING_BATCH,
    HeterodyneDataset,
    HomodyneDataset,
    heterodyne_sample_cov,
    homodyne_sample_variances,
)

STATE = StateSpec(6.44, 11.61, 0.3)
DET = DetectionModel(0.8, CovMat(0.04, 0.0, 0.04))
G_W = wigner_cov(STATE)


class TestAngleProtocol:
    def test_angles(self):
        p = AngleProtocol(4, 0.1)
        np.testing.assert_allclose(p.angles, 0.1 + np.arange(4) * math.pi / 2)

    def test_validation(self):
        with pytest.raises(InvalidProtocol):
            AngleProtocol(0)
        with pytest.raises(InvalidProtocol):
            AngleProtocol(-3)
        with pytest.raises(InvalidProtocol):
            AngleProtocol(4, -0.1)
        with pytest.raises(InvalidProtocol):
            AngleProtocol(4, math.pi / 2)  # offset must stay below 2*pi/count

    def test_random_offset_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = AngleProtocol.with_random_offset(6, rng)
            assert 0.0 <= p.offset < 2.0 * math.pi / 6


class TestDatasetValidation:
    def test_homodyne_rejects_unsorted_angles(self):
        x = np.zeros(3)
        with pytest.raises(ValueError):
            HomodyneDataset((0.5, 0.1), (x, x), {})

    def test_homodyne_rejects_out_of_range_angle(self):
        with pytest.raises(ValueError):
            HomodyneDataset((0.0, 7.0), (np.zeros(3), np.zeros(3)), {})

    def test_homodyne_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            HomodyneDataset((0.0,), (np.array([1.0, np.nan]),), {})

    def test_heterodyne_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            HeterodyneDataset(np.zeros((4, 3)), {})

    def test_counts_and_totals(self):
        d = sample_homodyne(G_W, DET, AngleProtocol(5), 40, 1)
        assert d.counts == (40,) * 5
        assert d.total_events == 200
        h = sample_heterodyne(G_W, DET, 30, 1)
        assert h.total_events == 30


class TestHomodyneSampling:
    def test_deterministic(self):
        a = sample_homodyne(G_W, DET, AngleProtocol(4, 0.2), 100, 7)
        b = sample_homodyne(G_W, DET, AngleProtocol(4, 0.2), 100, 7)
        for x, y in zip(a.samples, b.samples):
            np.testing.assert_array_equal(x, y)
        c = sample_homodyne(G_W, DET, AngleProtocol(4, 0.2), 100, 8)
        assert not np.array_equal(a.samples[0], c.samples[0])

    def test_meta(self):
        d = sample_homodyne(G_W, DET, AngleProtocol(4, 0.2), 100, 7)
        assert d.meta["scheme"] == "hom"
        assert d.meta["seed"] == 7
        assert d.meta["eta"] == DET.eta
        assert d.meta["angle_count"] == 4
        assert d.meta["offset"] == 0.2
        assert d.meta["n_per_angle"] == 100

    def test_marginal_variance_statistics(self):
        n = 200_000
        d = sample_homodyne(G_W, DET, AngleProtocol(3, 0.1), n, 21)
        g_hom = to_homodyne_cov(G_W, DET)
        for th, x in zip(d.angles, d.samples):
            want = marginal_variance(g_hom, th) + marginal_variance(DET.g_elec, th)
            got = np.mean(x * x)
            # sample variance of x^2 is 2*want^2/n
            assert abs(got - want) < 5.0 * want * math.sqrt(2.0 / n)

    def test_streaming_variances_match_dataset(self):
        prot = AngleProtocol(4, 0.05)
        d = sample_homodyne(G_W, DET, prot, 5000, 33)
        v = homodyne_sample_variances(G_W, DET, prot, 5000, 33)
        direct = np.array([np.mean(x * x) for x in d.samples])
        np.testing.assert_allclose(v, direct, rtol=1e-12)

    def test_streaming_variances_cross_batch_boundary(self):
        n = SAMPLING_BATCH + 4321
        prot = AngleProtocol(1)
        d = sample_homodyne(G_W, DET, prot, n, 5)
        assert d.samples[0].size == n
        v = homodyne_sample_variances(G_W, DET, prot, n, 5)
        np.testing.assert_allclose(v[0], np.mean(d.samples[0] ** 2), rtol=1e-12)


class TestHeterodyneSampling:
    def test_deterministic(self):
        a = sample_heterodyne(G_W, DET, 500, 3)
        b = sample_heterodyne(G_W, DET, 500, 3)
        np.testing.assert_array_equal(a.pairs, b.pairs)

    def test_meta(self):
        a = sample_heterodyne(G_W, DET, 500, 3)
        assert a.meta["scheme"] == "het"
        assert a.meta["n_pairs"] == 500

    def test_sample_covariance_statistics(self):
        n = 400_000
        d = sample_heterodyne(G_W, DET, n, 9)
        want = to_heterodyne_cov(G_W, DET).matrix + DET.g_elec.matrix
        got = d.pairs.T @ d.pairs / n
        scale = math.sqrt(want[0, 0] * want[1, 1])
        assert np.max(np.abs(got - want)) < 6.0 * scale / math.sqrt(n)

    def test_streaming_cov_matches_dataset(self):
        d = sample_heterodyne(G_W, DET, 3000, 13)
        s = heterodyne_sample_cov(G_W, DET, 3000, 13)
        np.testing.assert_allclose(s, d.pairs.T @ d.pairs / 3000, rtol=1e-12)


class TestThermalize:
    def test_homodyne_multiset_preserved_exactly(self):
        d = sample_homodyne(G_W, DET, AngleProtocol(6), 500, 17)
        t = thermalize_homodyne(d, 99)
        before = np.sort(np.concatenate(d.samples))
        after = np.sort(np.concatenate(t.samples))
        np.testing.assert_array_equal(before, after)
        assert t.counts == d.counts
        assert t.meta["thermalized"] == {"method": "shuffle", "seed": 99}

    def test_homodyne_deterministic(self):
        d = sample_homodyne(G_W, DET, AngleProtocol(6), 500, 17)
        t1 = thermalize_homodyne(d, 4)
        t2 = thermalize_homodyne(d, 4)
        for x, y in zip(t1.samples, t2.samples):
            np.testing.assert_array_equal(x, y)

    def test_homodyne_rejects_ragged(self):
        d = HomodyneDataset(
            (0.0, 1.0), (np.zeros(3), np.zeros(4)), {"scheme": "hom"}
        )
        with pytest.raises(RaggedDataset):
            thermalize_homodyne(d, 0)

    def test_homodyne_rejects_single_angle(self):
        d = sample_homodyne(G_W, DET, AngleProtocol(1), 50, 2)
        with pytest.raises(ValueError):
            thermalize_homodyne(d, 0)

    def test_heterodyne_norms_preserved(self):
        d = sample_heterodyne(G_W, DET, 2000, 23)
        t = thermalize_heterodyne(d, 5)
        np.testing.assert_allclose(
            (t.pairs**2).sum(axis=1), (d.pairs**2).sum(axis=1), rtol=1e-12
        )
        assert t.meta["thermalized"] == {"method": "rotate", "seed": 5}

    def test_heterodyne_isotropizes(self):
        n = 300_000
        d = sample_heterodyne(G_W, DetectionModel(1.0), n, 29)
        t = thermalize_heterodyne(d, 6)
        s = t.pairs.T @ t.pairs / n
        mean_var = 0.5 * (to_heterodyne_cov(G_W, DetectionModel(1.0)).trace)
        assert abs(s[0, 0] - mean_var) < 6.0 * mean_var * math.sqrt(2.0 / n) * 2.0
        assert abs(s[0, 1]) < 6.0 * mean_var / math.sqrt(n) * 2.0


def test_invalid_seed_rejected():
    with pytest.raises(ValueError):
        sample_heterodyne(G_W, DET, 10, -1)
    with pytest.raises(ValueError):
        sample_homodyne(G_W, DET, AngleProtocol(3), 10, 2.5)
