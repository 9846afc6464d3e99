import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agricurate.errors import DomainError
from agricurate.imgio import save_png
from agricurate.weights import (class_weights, counts_from_masks,
                                effective_number, weights_payload)


def summation_oracle(n, beta):
    return float(sum(beta ** i for i in range(n)))


class TestEffectiveNumber:
    def test_single_sample_is_one_for_any_beta(self):
        for beta in (0.0, 0.5, 0.9, 0.99, 0.999):
            assert effective_number(1, beta) == pytest.approx(1.0)

    def test_hundred_at_099_matches_summation(self):
        # oracle: direct summation of 0.99^0 + ... + 0.99^99
        expected = summation_oracle(100, 0.99)
        assert expected == pytest.approx(63.3968, abs=1e-4)
        assert effective_number(100, 0.99) == pytest.approx(expected, rel=1e-12)

    def test_beta_zero_is_one_for_all_positive_n(self):
        for n in (1, 2, 10, 1000):
            assert effective_number(n, 0.0) == 1.0

    def test_zero_count_is_zero(self):
        assert effective_number(0, 0.99) == 0.0

    def test_beta_one_is_domain_error(self):
        with pytest.raises(DomainError):
            effective_number(10, 1.0)

    def test_negative_count_is_domain_error(self):
        with pytest.raises(DomainError):
            effective_number(-1, 0.5)

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(0, 2000), beta=st.sampled_from([0.0, 0.5, 0.9, 0.99, 0.999]))
    def test_matches_summation_oracle(self, n, beta):
        oracle = summation_oracle(n, beta)
        got = effective_number(n, beta)
        assert abs(got - oracle) <= 1e-9 * max(oracle, 1.0)


class TestClassWeights:
    def test_symmetric_counts_give_unit_weights(self):
        cw = class_weights({"a": 10, "b": 10}, beta=0.99)
        assert cw.weights == {"a": pytest.approx(1.0), "b": pytest.approx(1.0)}

    def test_imbalanced_pair_oracle(self):
        # raw: a -> 1/E_1 = 1, b -> 1/E_100 = 1/63.3968; then mean-normalized
        cw = class_weights({"a": 1, "b": 100}, beta=0.99)
        assert cw.weights["a"] == pytest.approx(1.9690, abs=1e-3)
        assert cw.weights["b"] == pytest.approx(0.03105, abs=1e-3)

    def test_beta_zero_is_uniform(self):
        cw = class_weights({"a": 1, "b": 5000, "c": 3}, beta=0.0)
        assert all(w == pytest.approx(1.0) for w in cw.weights.values())

    def test_absent_class_gets_zero_and_is_excluded(self):
        cw = class_weights({"a": 50, "b": 0, "c": 50}, beta=0.9)
        assert cw.weights["b"] == 0.0
        included = [cw.weights["a"], cw.weights["c"]]
        assert np.mean(included) == pytest.approx(1.0)

    def test_all_zero_counts_is_domain_error(self):
        with pytest.raises(DomainError):
            class_weights({"a": 0, "b": 0}, beta=0.99)

    def test_mean_one_invariant(self):
        rng = np.random.default_rng(21)
        counts = {f"c{i}": int(n) for i, n in enumerate(rng.integers(1, 10_000, 12))}
        cw = class_weights(counts, beta=0.99)
        cw.validate()

    @settings(max_examples=60, deadline=None)
    @given(counts=st.lists(st.integers(1, 100_000), min_size=2, max_size=8),
           beta=st.sampled_from([0.5, 0.9, 0.99]))
    def test_monotonicity(self, counts, beta):
        named = {f"c{i}": n for i, n in enumerate(counts)}
        cw = class_weights(named, beta)
        for a in named:
            for b in named:
                if named[a] < named[b]:
                    assert cw.weights[a] >= cw.weights[b]
                    # strict only where beta^n is still representable in float64
                    if beta ** named[a] > 1e-9:
                        assert cw.weights[a] > cw.weights[b]

    def test_beta_to_one_approaches_inverse_frequency(self):
        # E_n saturates at 1/(1-beta), so at beta = 1 - 1/max the weight
        # ratios still deviate from 1/n ratios by up to e/(e-1) - 1 ~ 58%;
        # the inverse-frequency limit emerges as beta pushes past that, and
        # at beta = 1 - 1/(100 max) ratios are within 10% of 1/n ratios.
        rng = np.random.default_rng(22)
        counts = {f"c{i}": int(n) for i, n in enumerate(rng.integers(50, 5000, 6))}
        names = sorted(counts)

        def worst_ratio_error(beta):
            cw = class_weights(counts, beta)
            worst = 0.0
            for a in names:
                for b in names:
                    ratio = cw.weights[a] / cw.weights[b]
                    ref = counts[b] / counts[a]
                    worst = max(worst, abs(ratio / ref - 1.0))
            return worst

        n_max = max(counts.values())
        errors = [worst_ratio_error(1.0 - 1.0 / (k * n_max)) for k in (1, 10, 100)]
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] <= 0.10


class TestCountsFromMasks:
    def test_pixel_counts_skip_ignore(self, tmp_path):
        table = {0: "SOIL", 1: "ZEAMX", 2: "ABUTH"}
        values = np.zeros((10, 10), dtype=np.uint8)
        values[0:2] = 1          # 20 px
        values[2:3] = 2          # 10 px
        values[9:] = 255         # ignored
        save_png(values, tmp_path / "m.png")
        counts = counts_from_masks([tmp_path / "m.png"], table)
        assert counts == {"SOIL": 60, "ZEAMX": 20, "ABUTH": 10}

    def test_payload_shape(self, tmp_path):
        payload = weights_payload({"a": 10, "b": 1000}, beta=0.99)
        assert set(payload) == {"beta", "counts", "weights"}
        ws = list(payload["weights"].values())
        assert np.mean(ws) == pytest.approx(1.0, abs=1e-8)
