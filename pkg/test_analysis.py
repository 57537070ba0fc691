"""Tests for coincidence counting, CCD correlations and the data hierarchy."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from multislit.analysis import (
    BACKGROUND,
    CcdCorrelation,
    CorrelationAccumulator,
    CountRecord,
    background_profile,
    background_subtract,
    ccd_autocorrelation,
    correct_nonresolving,
    count_coincidences,
    count_record,
    hierarchy_from_data,
    monte_carlo_sigma,
    propagate_count_errors,
    tables_from_counts,
)
from multislit.hierarchy import GTable, MissingConfigurationError, compute_order, subconfigurations, theory_table
from multislit.optics import MaskGeometry, PhaseGrid, SlitConfiguration, SourceState, all_configurations, g1
from multislit.spad_sim import expected_coincidences, simulate_poisson_stream


def ideal_count_records():
    """Singles ∝ |S|², coincidences ∝ |S|⁴: the δ = 0 values of ideal coherent light."""

    records = {
        config: CountRecord(config, 50 * len(config) ** 2, 50 * len(config) ** 2, len(config) ** 4, 1.0, 1000.0)
        for config in all_configurations()
    }
    records[BACKGROUND] = CountRecord(BACKGROUND, 0, 0, 0, 1.0, 1000.0)
    return records


def test_coincidences_include_multiplicity():
    """Every pair inside the window counts, not just the first match."""
    assert count_coincidences(np.array([0, 1000, 5000]), np.array([500, 1500, 9000]), 600) == 3


def test_coincidence_window_is_inclusive():
    """A separation equal to the window is a coincidence; one picosecond more is not."""
    assert count_coincidences(np.array([0]), np.array([1000]), 1000) == 1
    assert count_coincidences(np.array([0]), np.array([1001]), 1000) == 0
    assert count_coincidences(np.array([], dtype=np.int64), np.array([3]), 1000) == 0


def pairwise_coincidences(first, second, window):
    total = 0
    for start in range(0, first.size, 1000):
        block = first[start:start + 1000, np.newaxis]
        total += int(np.count_nonzero(np.abs(block - second[np.newaxis, :]) <= window))
    return total


def test_coincidences_match_pairwise_counting():
    """The sorted-search counter agrees with brute force for streams of up to 10⁴ tags."""
    rng = np.random.default_rng(31)
    for _ in range(20):
        first = np.sort(rng.integers(0, 10**7, size=rng.integers(0, 10**4 + 1)))
        second = np.sort(rng.integers(0, 10**7, size=rng.integers(0, 10**4 + 1)))
        window = int(rng.integers(0, 2000))
        assert count_coincidences(first, second, window) == pairwise_coincidences(first, second, window)
    full = np.sort(rng.integers(0, 10**7, size=10**4))
    assert count_coincidences(full, full, 500) == pairwise_coincidences(full, full, 500)


def test_unsorted_streams_rejected():
    """Unsorted streams and negative windows are refused."""
    with pytest.raises(ValueError):
        count_coincidences(np.array([10, 2]), np.array([1]), 100)
    with pytest.raises(ValueError):
        count_coincidences(np.array([1]), np.array([1]), -1)


def test_accidental_coincidences_match_the_rate_formula():
    """Independent Poisson streams give r1·r2·2t_f·T coincidences."""
    first = simulate_poisson_stream(1e6, 1.0, seed=1)
    second = simulate_poisson_stream(1e6, 1.0, seed=2)
    observed = count_coincidences(first, second, 1000)
    expected = expected_coincidences(first.size, second.size, 1000, 1.0)
    assert abs(observed - expected) < 5 * np.sqrt(expected)


def test_count_record_and_errors():
    """Singles, coincidences and their Poisson errors from two short streams."""
    record = count_record(SlitConfiguration.from_label("AB"), np.array([0, 10]), np.array([25, 900]), 20, 2.0)
    assert (record.singles_1, record.singles_2, record.coincidences, record.singles) == (2, 2, 1, 4)
    errors = propagate_count_errors(record)
    assert errors["singles"] == pytest.approx(2.0)
    assert errors["coincidences"] == pytest.approx(1.0)


def test_nonresolving_correction():
    """The singles lose the coincidences, which are doubled."""
    assert correct_nonresolving(100, 10) == (90, 20)
    with pytest.raises(ValueError):
        correct_nonresolving(5, 10)


def test_photon_tables_are_rates_with_poisson_errors():
    """Counts become rates with √N/T uncertainties."""
    records = {BACKGROUND: CountRecord(BACKGROUND, 4, 5, 0, 2.0, 1000.0)}
    table_1, table_2 = tables_from_counts(records)
    assert table_1.get(BACKGROUND)[0] == pytest.approx(4.5)
    assert table_1.sigma(BACKGROUND)[0] == pytest.approx(1.5)
    assert table_2.get(BACKGROUND)[0] == 0.0


def test_ideal_counts_give_ideal_hierarchy():
    """Counts proportional to |S|² and |S|⁴ reproduce the ideal orders."""
    hierarchy = hierarchy_from_data(ideal_count_records(), "photon", set_index=3)
    assert hierarchy.set_index == 3
    assert hierarchy.sorkin[1].value == pytest.approx(0.0, abs=1e-12)
    assert hierarchy.sorkin[2].value == pytest.approx(0.0, abs=1e-12)
    assert hierarchy.sorkin[2].regime == "photon-correlation"
    assert hierarchy.orders[(2, 3)].at_zero()[0] == pytest.approx(4 / 9)
    assert hierarchy.orders[(2, 2)].at_zero()[0] == pytest.approx(0.875)
    assert hierarchy.sorkin[2].uncertainty > 0


def test_global_intensity_scale_leaves_orders_unchanged():
    """A common intensity factor cancels in every normalized order."""
    reference = hierarchy_from_data(ideal_count_records(), "photon")
    scaled = {
        config: CountRecord(config, 3 * r.singles_1, 3 * r.singles_2, 9 * r.coincidences, r.duration_s, r.window_ps)
        for config, r in ideal_count_records().items()
    }
    hierarchy = hierarchy_from_data(scaled, "photon")
    for key, result in reference.orders.items():
        assert hierarchy.orders[key].at_zero()[0] == pytest.approx(result.at_zero()[0], abs=1e-12)


def test_nonresolving_correction_leaves_second_order_untouched():
    """Doubling every coincidence count rescales G^(2) only, so Ī^(2) is bit-identical."""
    rng = np.random.default_rng(12)
    records = {}
    for config in all_configurations():
        singles_1, singles_2 = (int(x) for x in rng.integers(2000, 5000, size=2))
        records[config] = CountRecord(config, singles_1, singles_2, int(rng.integers(1, 500)), 1.0, 1000.0)
    records[BACKGROUND] = CountRecord(BACKGROUND, 20, 25, 0, 1.0, 1000.0)
    plain = hierarchy_from_data(records, "photon")
    corrected = hierarchy_from_data(records, "photon", correct_counts=True)
    for n in (2, 3, 4, 5):
        np.testing.assert_array_equal(corrected.orders[(2, n)].normalized, plain.orders[(2, n)].normalized)
    assert corrected.sorkin[2].value == plain.sorkin[2].value
    assert corrected.orders[(1, 5)].denominator < plain.orders[(1, 5)].denominator


def test_poisson_background_subtraction_is_unbiased():
    """Over 100 trials the background-subtracted rate averages to the true signal."""
    rng = np.random.default_rng(40)
    a = SlitConfiguration.from_label("A")
    corrected, sigmas = [], []
    for _ in range(100):
        records = {
            a: CountRecord(a, int(rng.poisson(450.0)), 0, 0, 1.0, 1000.0),
            BACKGROUND: CountRecord(BACKGROUND, int(rng.poisson(50.0)), 0, 0, 1.0, 1000.0),
        }
        table, _ = tables_from_counts(records)
        subtracted = background_subtract(table, table)
        corrected.append(subtracted.get(a)[0])
        sigmas.append(subtracted.sigma(a)[0])
    corrected = np.array(corrected)
    assert abs(corrected.mean() - 400.0) < 5 * corrected.std(ddof=1) / np.sqrt(corrected.size)
    assert np.mean(sigmas) == pytest.approx(corrected.std(ddof=1), rel=0.25)


def test_kappa_spread_scales_as_inverse_root_counts():
    """Quadrupling the counts halves the spread of κ^(1), measured and propagated."""
    rng = np.random.default_rng(77)
    spreads, propagated = [], []
    for level in (1, 4, 16):
        values, sigmas = [], []
        for _ in range(400):
            records = {
                config: CountRecord(
                    config,
                    int(rng.poisson(50 * level * len(config) ** 2)),
                    int(rng.poisson(50 * level * len(config) ** 2)),
                    int(rng.poisson(level * len(config) ** 4)),
                    1.0,
                    1000.0,
                )
                for config in all_configurations()
            }
            records[BACKGROUND] = CountRecord(BACKGROUND, int(rng.poisson(10 * level)), int(rng.poisson(10 * level)), 0, 1.0, 1000.0)
            estimate = hierarchy_from_data(records, "photon").sorkin[1]
            values.append(estimate.value)
            sigmas.append(estimate.uncertainty)
        spreads.append(np.std(values, ddof=1))
        propagated.append(np.mean(sigmas))
    assert spreads[0] / spreads[1] == pytest.approx(2.0, rel=0.2)
    assert spreads[1] / spreads[2] == pytest.approx(2.0, rel=0.2)
    np.testing.assert_allclose(propagated, spreads, rtol=0.2)


def test_labels_are_accepted_as_keys():
    """Records may be keyed by configuration label."""
    records = {config.label: record for config, record in ideal_count_records().items()}
    assert hierarchy_from_data(records, "photon").sorkin[1].value == pytest.approx(0.0, abs=1e-12)


def test_incomplete_set_names_the_missing_configuration():
    """A missing configuration is reported by label."""
    records = ideal_count_records()
    del records[SlitConfiguration.from_label("BDE")]
    with pytest.raises(MissingConfigurationError, match="BDE"):
        hierarchy_from_data(records, "photon")


def test_unknown_regime_rejected():
    """Only the photon and intensity regimes are known."""
    with pytest.raises(ValueError):
        hierarchy_from_data(ideal_count_records(), "ideal")


def test_empty_base_configuration_skips_only_that_order():
    """A zero normalization drops one order and keeps the rest."""
    records = ideal_count_records()
    ab = SlitConfiguration.from_label("AB")
    records[ab] = CountRecord(ab, 800, 800, 0, 1.0, 1000.0)
    hierarchy = hierarchy_from_data(records, "photon")
    assert (2, 2) not in hierarchy.orders
    assert (2, 3) in hierarchy.orders
    assert set(hierarchy.sorkin) == {1, 2}


def test_background_subtraction_removes_the_offset_entry():
    """The "0" entry is subtracted and dropped, errors add in quadrature."""
    grid = PhaseGrid.single(0.0)
    a = SlitConfiguration.from_label("A")
    table = GTable(1, grid, {a: [10.0], BACKGROUND: [3.0]}, {a: [0.3], BACKGROUND: [0.4]})
    corrected = background_subtract(table, table)
    assert BACKGROUND not in corrected
    assert corrected.get(a)[0] == pytest.approx(7.0)
    assert corrected.sigma(a)[0] == pytest.approx(0.5)


def test_scaling_and_common_offset_leave_normalized_orders_unchanged():
    """Scaling, and an offset removed by background subtraction, leave Ī unchanged."""
    grid = PhaseGrid.uniform(count=101)
    table = theory_table(2, grid, SourceState.coherent(), MaskGeometry())
    with_background = GTable(2, grid, {**table.values, BACKGROUND: np.zeros(len(grid))})
    shifted = with_background.shifted(5.0)
    recovered = background_subtract(shifted, shifted)
    base = SlitConfiguration.from_label("ABCD")
    reference = compute_order(2, base, table).normalized
    np.testing.assert_allclose(compute_order(2, base, table.scaled(3.7)).normalized, reference, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(compute_order(2, base, recovered).normalized, reference, atol=1e-10)


def test_line_pair_correlation_of_constant_frames():
    """Constant frames give G^(1) = c and G^(2) = c² with no spread."""
    frames = np.full((3, 5, 4), 7.0)
    result = ccd_autocorrelation(frames, np.arange(4.0))
    np.testing.assert_allclose(result.g1, 7.0)
    np.testing.assert_allclose(result.g2, 49.0)
    assert result.samples == 15
    assert result.pair_samples == 6
    np.testing.assert_allclose(result.g1_sigma, 0.0)


def test_line_pairs_are_disjoint_neighbours():
    """Rows are paired (0, 1), (2, 3) without overlap."""
    frame = np.array([[1.0], [2.0], [3.0], [4.0]])
    result = ccd_autocorrelation(frame[np.newaxis], np.array([0.0]))
    assert result.g2[0] == pytest.approx((1 * 2 + 3 * 4) / 2)


def test_line_pair_correlation_matches_direct_averaging():
    """The accumulated correlations equal plain averages over frames and line pairs."""
    rng = np.random.default_rng(8)
    frames = rng.integers(0, 100, size=(10, 10, 10)).astype(float)
    result = ccd_autocorrelation(frames, np.arange(10.0))
    products = frames[:, 0::2, :] * frames[:, 1::2, :]
    np.testing.assert_allclose(result.g1, frames.mean(axis=(0, 1)), rtol=1e-12)
    np.testing.assert_allclose(result.g2, products.mean(axis=(0, 1)), rtol=1e-12)


def test_chunked_accumulation_matches_one_shot():
    """Feeding frames in chunks gives the same correlations as one call."""
    rng = np.random.default_rng(5)
    frames = rng.poisson(100.0, size=(6, 8, 10)).astype(float)
    phases = np.linspace(-1.0, 1.0, 10)
    accumulator = CorrelationAccumulator(10)
    accumulator.add(frames[:2])
    accumulator.add(frames[2:])
    chunked = accumulator.result(phases)
    whole = ccd_autocorrelation(frames, phases)
    np.testing.assert_allclose(chunked.g2, whole.g2)
    np.testing.assert_allclose(chunked.g2_sigma, whole.g2_sigma)


def test_background_profile_makes_correlation_offset_free():
    """Subtracting the dark column profile removes a fixed offset."""
    rng = np.random.default_rng(6)
    signal = rng.poisson(50.0, size=(4, 6, 5)).astype(float)
    offset = np.array([20.0, 21.0, 19.0, 20.0, 22.0])
    phases = np.zeros(5)
    dark = np.broadcast_to(offset, (2, 6, 5))
    shifted = ccd_autocorrelation(signal + offset, phases, background=background_profile(dark))
    plain = ccd_autocorrelation(signal, phases)
    np.testing.assert_allclose(shifted.g1, plain.g1)
    np.testing.assert_allclose(shifted.g2, plain.g2)


def test_crop_window_is_applied():
    """The crop window selects the columns and must fit the frame."""
    frames = np.arange(2 * 4 * 6, dtype=float).reshape(2, 4, 6)
    result = ccd_autocorrelation(frames, np.zeros(3), crop=(0, 2, 1, 4))
    assert result.g1.shape == (3,)
    with pytest.raises(ValueError):
        ccd_autocorrelation(frames, np.zeros(3), crop=(0, 9, 1, 4))


def test_ideal_intensity_correlations_give_zero_sorkin():
    """Noise-free CCD correlations of coherent light give κ = 0."""
    geometry = MaskGeometry()
    source = SourceState.coherent()
    phases = PhaseGrid.uniform(count=101).values
    records = {}
    for config in all_configurations():
        values = g1(config, phases, source, geometry)
        zeros = np.zeros_like(phases)
        records[config] = CcdCorrelation(phases, values, values ** 2, zeros + 0.01, zeros + 0.01, 100, 50)
    zeros = np.zeros_like(phases)
    records[BACKGROUND] = CcdCorrelation(phases, zeros, zeros, zeros + 0.01, zeros + 0.01, 100, 50)
    hierarchy = hierarchy_from_data(records, "intensity")
    assert abs(hierarchy.sorkin[1].value) < 1e-10
    assert abs(hierarchy.sorkin[2].value) < 1e-10
    assert hierarchy.sorkin[2].regime == "intensity-correlation"
    assert hierarchy.orders[(2, 4)].at_zero()[0] == pytest.approx(3 / 32)


def test_first_order_sigma_agrees_with_resampling():
    """The propagated first-order error matches normal and Poisson resampling."""
    base = SlitConfiguration.from_label("ABC")
    grid = PhaseGrid.single(0.0)
    values = {c: [1e4 * len(c) ** 2] for c in subconfigurations(base)}
    sigmas = {c: np.sqrt(v) for c, v in values.items()}
    table = GTable(1, grid, values, sigmas)
    analytic = compute_order(1, base, table).at_zero()[1]
    resampled = monte_carlo_sigma(table, 1, base, trials=10_000, seed=17)
    assert resampled == pytest.approx(analytic, rel=0.1)
    counted = monte_carlo_sigma(table, 1, base, trials=10_000, seed=18, poisson=True)
    assert counted == pytest.approx(analytic, rel=0.1)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
