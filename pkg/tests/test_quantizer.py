import numpy as np
import pytest
from pydantic import ValidationError

from fedtoe.core.errors import ParameterError, PartitionError, RangeViolationError
from fedtoe.core.quantizer import (
    bit_cost,
    bit_cost_experiment,
    compute_ranges,
    dequantize,
    dequantize_update,
    partition_sizes,
    qe_bound,
    quantize_update,
    quantize_value,
    quantize_vector,
)
from fedtoe.schemas.quantization import GroupSpec


class TestQuantizeValue:
    def test_rounds_up_with_distance_probability(self):
        group = GroupSpec(lower=0.0, upper=1.0, size=1)
        rng = np.random.default_rng(0)
        levels = np.array([quantize_value(0.4, group, 2, rng)[1] for _ in range(20_000)])
        assert set(np.unique(levels)) == {1, 2}
        share = np.mean(levels == 2)
        assert share == pytest.approx(0.2, abs=5 * np.sqrt(0.16 / levels.size))

    def test_value_on_knob_is_exact(self):
        group = GroupSpec(lower=0.2, upper=0.8, size=1)
        rng = np.random.default_rng(1)
        assert quantize_value(0.4, group, 2, rng) == (1, 1)
        assert quantize_value(-0.8, group, 2, rng) == (-1, 3)

    def test_degenerate_range(self):
        group = GroupSpec(lower=0.5, upper=0.5, size=1)
        sign, level = quantize_value(-0.5, group, 3, np.random.default_rng(2))
        assert (sign, level) == (-1, 0)
        assert dequantize(sign, level, group, 3) == -0.5

    def test_out_of_range(self):
        group = GroupSpec(lower=0.2, upper=0.8, size=1)
        with pytest.raises(RangeViolationError):
            quantize_value(0.9, group, 2, np.random.default_rng(3))

    @pytest.mark.parametrize("B", [0, 1.5, 53])
    def test_bad_bit_count(self, B):
        group = GroupSpec(lower=0.0, upper=1.0, size=1)
        with pytest.raises(ParameterError):
            quantize_value(0.5, group, B, np.random.default_rng(4))


class TestDequantize:
    def test_knob_position(self):
        assert dequantize(1, 1, GroupSpec(lower=0.2, upper=0.8, size=1), 2) == pytest.approx(0.4)

    def test_level_out_of_range(self):
        with pytest.raises(RangeViolationError):
            dequantize(1, 4, GroupSpec(lower=0.0, upper=1.0, size=1), 2)

    def test_group_rejects_inverted_range(self):
        with pytest.raises(ValidationError):
            GroupSpec(lower=1.0, upper=0.5, size=1)


class TestQuantizeUpdate:
    def test_unbiased_and_within_error_bound(self):
        rng = np.random.default_rng(5)
        v = rng.normal(size=12)
        groups = compute_ranges(v, partition_sizes(12, 3))
        n = 4000
        payload = quantize_update(np.tile(v, n), groups * n, 3, rng)
        error = (dequantize_update(payload) - np.tile(v, n)).reshape(n, 12)

        se = error.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(error.mean(axis=0)) <= 5 * se + 1e-12)
        assert np.sum(error**2, axis=1).max() <= 4 * qe_bound(groups, 3).bound * (1 + 1e-9)

        mse = np.sum(error**2, axis=1).mean()
        assert mse <= qe_bound(groups, 3).bound * 1.05

    def test_signs_and_range_endpoints_survive(self):
        v = np.array([-2.0, 0.5, 1.0, -0.25])
        update = quantize_vector(v, 1, 4, np.random.default_rng(6))
        decoded = dequantize_update(update)
        assert np.array_equal(np.sign(decoded), np.sign(v))
        assert decoded[0] == pytest.approx(-2.0)
        assert decoded[3] == pytest.approx(-0.25)

    def test_payload_size(self):
        v = np.linspace(-1.0, 1.0, 10)
        update = quantize_vector(v, 2, 5, np.random.default_rng(7))
        assert update.total_bits == bit_cost_experiment(10, 5, 2, 2, 64, 64)
        assert update.levels.max() <= 31

    def test_stream_position_independent_of_values(self):
        rng_a, rng_b = np.random.default_rng(8), np.random.default_rng(8)
        quantize_vector(np.zeros(6), 1, 2, rng_a)
        quantize_vector(np.arange(6.0), 2, 2, rng_b)
        assert rng_a.random() == rng_b.random()

    def test_partition_must_cover_update(self):
        with pytest.raises(PartitionError):
            quantize_update(np.ones(4), [GroupSpec(lower=0.0, upper=1.0, size=3)], 2, np.random.default_rng(9))


class TestRanges:
    def test_compute_ranges(self):
        groups = compute_ranges(np.array([-3.0, 1.0, 0.5, -0.1]), [2, 2])
        assert (groups[0].lower, groups[0].upper) == (1.0, 3.0)
        assert (groups[1].lower, groups[1].upper) == (0.1, 0.5)

    def test_partition_sizes(self):
        assert partition_sizes(10, 3) == [4, 3, 3]
        with pytest.raises(PartitionError):
            partition_sizes(2, 3)

    def test_empty_group(self):
        with pytest.raises(PartitionError):
            compute_ranges(np.ones(3), [3, 0])


class TestBitCost:
    def test_qe_bound_single_parameter(self):
        bound = qe_bound([GroupSpec(lower=0.0, upper=1.0, size=1)], 1)
        assert bound.bound == pytest.approx(0.25)
        assert bound.delta == pytest.approx(0.5)

    def test_qe_bound_shrinks_with_bits(self):
        groups = [GroupSpec(lower=0.0, upper=2.0, size=5)]
        bounds = [qe_bound(groups, B).bound for B in range(1, 8)]
        assert all(a > b for a, b in zip(bounds, bounds[1:]))

    def test_bit_cost(self):
        assert bit_cost(100, 4, 17) == 417

    def test_layered_payload(self):
        assert bit_cost_experiment(23860, 5, 4, 4, 64, 64) == 143672

    def test_bit_cost_rejects_bad_inputs(self):
        with pytest.raises(ParameterError):
            bit_cost(0, 4, 0)
