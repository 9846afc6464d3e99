import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agricurate.errors import ConfigError, DomainError
from agricurate.manifest import DatasetManifest, ImageRecord
from agricurate.vegetation import (DEFAULT_BIN_EDGES, VegetationConfig,
                                   assign_bin, balance, bin_count, coverage,
                                   exg_levels, exg_mask, otsu_threshold)


def otsu_oracle(hist):
    """Exhaustive 256-threshold search maximizing between-class variance."""
    hist = np.asarray(hist, dtype=np.float64)
    total = hist.sum()
    levels = np.arange(256)
    best_t, best_sigma = 0, -1.0
    for t in range(256):
        w0 = hist[:t + 1].sum() / total
        w1 = 1.0 - w0
        if w0 == 0 or w1 == 0:
            sigma = 0.0
        else:
            mu0 = (hist[:t + 1] * levels[:t + 1]).sum() / (w0 * total)
            mu1 = (hist[t + 1:] * levels[t + 1:]).sum() / (w1 * total)
            sigma = w0 * w1 * (mu0 - mu1) ** 2
        if sigma > best_sigma:
            best_t, best_sigma = t, sigma
    return best_t


class TestExg:
    def test_pure_green_is_max_and_vegetation(self):
        tile = np.zeros((4, 4, 3), dtype=np.uint8)
        tile[..., 1] = 255
        tile[0, 0] = (128, 128, 128)     # one gray pixel so Otsu has two modes
        levels = exg_levels(tile)
        assert levels[1, 1] == 255       # ExG = 2.0 quantizes to the top level
        assert exg_mask(tile)[1, 1]

    def test_gray_pixel_is_exg_zero(self):
        tile = np.full((4, 4, 3), 93, dtype=np.uint8)
        levels = exg_levels(tile)
        # ExG = 0 maps to floor(256/3) = 85
        assert (levels == 85).all()

    def test_zero_sum_pixel_is_exg_zero(self):
        tile = np.zeros((2, 2, 3), dtype=np.uint8)
        assert (exg_levels(tile) == 85).all()

    def test_half_green_half_gray_coverage(self):
        tile = np.full((518, 518, 3), 93, dtype=np.uint8)
        tile[:259, :, 0] = 0
        tile[:259, :, 1] = 255
        tile[:259, :, 2] = 0
        mask = exg_mask(tile)
        assert coverage(mask) == pytest.approx(0.5)
        levels = exg_levels(tile)
        hist = np.bincount(levels.reshape(-1), minlength=256)
        assert otsu_threshold(hist) == otsu_oracle(hist)


class TestOtsu:
    def test_matches_exhaustive_oracle_on_random_histograms(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            hist = rng.integers(0, 50, 256)
            # sprinkle a couple of modes so the histograms look like images
            for _ in range(int(rng.integers(1, 4))):
                c = int(rng.integers(0, 256))
                hist[max(0, c - 4):c + 4] += int(rng.integers(100, 2000))
            assert otsu_threshold(hist) == otsu_oracle(hist)

    def test_empty_histogram_raises(self):
        with pytest.raises(DomainError):
            otsu_threshold(np.zeros(256, dtype=int))


class TestCoverage:
    def test_all_zero(self):
        assert coverage(np.zeros((10, 10), bool)) == 0.0

    def test_all_one(self):
        assert coverage(np.ones((10, 10), bool)) == 1.0

    def test_half_strip(self):
        mask = np.zeros((518, 518), bool)
        mask[:259] = True
        assert coverage(mask) == pytest.approx(0.5)


def tiles_manifest(coverages):
    records = []
    for i, cov in enumerate(coverages):
        records.append(ImageRecord(id=f"t{i:05d}.png", path=f"t{i:05d}.png",
                                   sha256="0" * 64, width=8, height=8,
                                   collection="C", veg_coverage=cov))
    return DatasetManifest(records)


class TestBinning:
    def test_zero_bin_is_dedicated(self):
        assert assign_bin(0.0, DEFAULT_BIN_EDGES) == 0

    def test_interval_bins_left_open_right_closed(self):
        assert assign_bin(0.05, DEFAULT_BIN_EDGES) == 1
        assert assign_bin(0.1, DEFAULT_BIN_EDGES) == 1
        assert assign_bin(0.1000001, DEFAULT_BIN_EDGES) == 2
        assert assign_bin(1.0, DEFAULT_BIN_EDGES) == 10

    def test_default_bin_count_is_11(self):
        assert bin_count(DEFAULT_BIN_EDGES) == 11

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 1))
    def test_every_coverage_falls_in_exactly_one_bin(self, cov):
        b = assign_bin(cov, DEFAULT_BIN_EDGES)
        assert 0 <= b < 11
        if b == 0:
            assert cov == 0.0
        else:
            assert DEFAULT_BIN_EDGES[b - 1] < cov <= DEFAULT_BIN_EDGES[b]


class TestBalance:
    def config(self, target, seed=3, edges=None):
        kw = {}
        if edges is not None:
            kw["bin_edges"] = edges
        return VegetationConfig(target_total=target, seed=seed, **kw)

    def test_three_equal_bins_take_fifty_each(self):
        # 100 tiles in each of three interval bins, edges {0, 1/3, 2/3, 1}
        edges = (0.0, 1 / 3, 2 / 3, 1.0)
        covs = [0.1] * 100 + [0.5] * 100 + [0.9] * 100
        m = tiles_manifest(covs)
        # 4 bins including the empty zero bin; quota 150 // 4 = 37
        _, report = balance(m, self.config(150, edges=edges))
        assert [b["selected"] for b in report["bins"]] == [0, 37, 37, 37]

    def test_min_law_caps_by_availability(self):
        edges = (0.0, 1 / 3, 2 / 3, 1.0)
        covs = [0.1] * 10 + [0.5] * 100 + [0.9] * 100
        m = tiles_manifest(covs)
        _, report = balance(m, self.config(400, edges=edges))
        # quota 100, capped at 10 for the sparse bin
        assert [b["selected"] for b in report["bins"]] == [0, 10, 100, 100]

    def test_uniform_11k_corpus_takes_500_per_bin(self):
        rng = np.random.default_rng(6)
        covs = []
        for b in range(11):
            for _ in range(1000):
                if b == 0:
                    covs.append(0.0)
                else:
                    lo, hi = (b - 1) / 10, b / 10
                    covs.append(float(rng.uniform(lo + 1e-9, hi)))
        m = tiles_manifest(covs)
        _, report = balance(m, self.config(5500))
        assert all(b["selected"] == 500 for b in report["bins"])
        assert report["total_selected"] == 5500

    def test_histogram_conservation(self):
        rng = np.random.default_rng(12)
        covs = [float(c) for c in rng.uniform(0, 1, 500)] + [0.0] * 25
        m = tiles_manifest(covs)
        _, report = balance(m, self.config(100))
        assert sum(b["available"] for b in report["bins"]) == len(m.kept())

    def test_determinism_and_seed_sensitivity(self):
        rng = np.random.default_rng(13)
        covs = [float(c) for c in rng.uniform(0, 1, 300)]
        m = tiles_manifest(covs)
        out_a, rep_a = balance(m, self.config(80, seed=1))
        out_b, rep_b = balance(m, self.config(80, seed=1))
        out_c, rep_c = balance(m, self.config(80, seed=2))
        sel = lambda out: {r.id for r in out if r.selected}
        assert sel(out_a) == sel(out_b)
        assert sel(out_a) != sel(out_c)
        assert [b["selected"] for b in rep_a["bins"]] == [b["selected"] for b in rep_c["bins"]]

    def test_missing_coverage_raises(self):
        m = tiles_manifest([0.5, 0.7])
        m.records[1].veg_coverage = None
        with pytest.raises(DomainError, match="veg_coverage"):
            balance(m, self.config(10))

    def test_no_kept_tiles_raises(self):
        m = tiles_manifest([0.5])
        m.records[0].status = "blurry"
        with pytest.raises(DomainError):
            balance(m, self.config(10))

    def test_bad_edges_rejected(self):
        with pytest.raises(ConfigError):
            VegetationConfig(bin_edges=(0.0, 0.5, 0.4, 1.0), target_total=1).validate()
        with pytest.raises(ConfigError):
            VegetationConfig(bin_edges=(0.1, 0.5, 1.0), target_total=1).validate()
