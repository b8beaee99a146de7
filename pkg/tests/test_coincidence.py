import numpy as np
import pytest
from scipy.special import erf

from qcomb.coincidence import (
    CoincidenceHistogram,
    FitFailure,
    PeakFit,
    fit_gaussian,
    histogram,
    metrics,
    window_sweep,
)
from qcomb.core_model import FWHM_PER_SIGMA
from qcomb.tags import TagStream


def stream_from(times_a, times_b, duration_s=1.0):
    t = np.concatenate([times_a, times_b]).astype(np.int64)
    ch = np.concatenate(
        [np.zeros(len(times_a), dtype=np.uint16), np.ones(len(times_b), dtype=np.uint16)]
    )
    order = np.lexsort((ch, t))
    return TagStream(
        resolution_ps=1,
        timestamps=t[order].astype(np.uint64),
        channels=ch[order],
        channel_count=2,
        metadata={"duration_s": duration_s},
    )


def brute_force_histogram(ts, ti, bin_width, m):
    """O(N^2) pairing oracle with the same centered half-open binning."""
    half = bin_width // 2
    counts = np.zeros(2 * m + 1, dtype=np.int64)
    for s in ts:
        for i in ti:
            k = (int(i) - int(s) + half) // bin_width
            if -m <= k <= m:
                counts[k + m] += 1
    return counts


def synthetic_gaussian_hist(
    amplitude=1000.0,
    sigma_ps=368.0,
    baseline=50.0,
    bin_width=100,
    m=150,
    mean_ps=0.0,
    duration=60.0,
):
    delays = np.arange(-m, m + 1)
    x = delays * bin_width
    counts = np.rint(
        amplitude * np.exp(-((x - mean_ps) ** 2) / (2.0 * sigma_ps**2)) + baseline
    ).astype(np.int64)
    return CoincidenceHistogram(
        bin_width_ps=bin_width, delays=delays, counts=counts, total_integration=duration
    )


class TestHistogram:
    def test_single_coincidence_lands_in_central_bin(self):
        s = stream_from([1000], [1000])
        h = histogram(s, 0, 1, bin_width_ps=100, span_ps=1000)
        assert h.counts[np.where(h.delays == 0)[0][0]] == 1
        assert h.counts.sum() == 1

    def test_span_smaller_than_bin_rejected(self):
        s = stream_from([1000], [1000])
        with pytest.raises(ValueError, match="span"):
            histogram(s, 0, 1, bin_width_ps=100, span_ps=50)

    def test_empty_channel_gives_zero_histogram(self):
        s = stream_from([1000, 2000], [])
        h = histogram(s, 0, 1, bin_width_ps=100, span_ps=1000)
        assert h.counts.sum() == 0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        ts = np.sort(rng.integers(0, 200_000, 300))
        ti = np.sort(rng.integers(0, 200_000, 400))
        s = stream_from(ts, ti)
        for bin_width in (100, 101):
            h = histogram(s, 0, 1, bin_width_ps=bin_width, span_ps=20 * bin_width)
            oracle = brute_force_histogram(ts, ti, bin_width, 20)
            np.testing.assert_array_equal(h.counts, oracle)

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        ts = np.sort(rng.integers(0, 100_000, 200))
        ti = np.sort(rng.integers(0, 100_000, 200))
        h1 = histogram(stream_from(ts, ti), 0, 1, 100, 5000)
        h2 = histogram(stream_from(ts + 777_000, ti + 777_000), 0, 1, 100, 5000)
        np.testing.assert_array_equal(h1.counts, h2.counts)

    def test_channel_swap_mirrors_histogram(self):
        rng = np.random.default_rng(4)
        ts = np.sort(rng.integers(0, 100_000, 300))
        ti = np.sort(rng.integers(0, 100_000, 300))
        s = stream_from(ts, ti)
        # odd bin width: bin edges fall on half-integers, no boundary ties
        h_fwd = histogram(s, 0, 1, 101, 2020)
        h_rev = histogram(s, 1, 0, 101, 2020)
        np.testing.assert_array_equal(h_fwd.counts, h_rev.counts[::-1])

    def test_flat_floor_level_for_uncorrelated_channels(self):
        rng = np.random.default_rng(5)
        rate_a, rate_b, duration = 1e5, 2e5, 2.0
        ticks = int(duration * 1e12)
        ts = np.sort(rng.integers(0, ticks, int(rate_a * duration)))
        ti = np.sort(rng.integers(0, ticks, int(rate_b * duration)))
        h = histogram(stream_from(ts, ti, duration), 0, 1, 1000, 50_000)
        expect_per_bin = rate_a * rate_b * 1000e-12 * duration  # = 80
        assert h.counts.mean() == pytest.approx(expect_per_bin, rel=0.1)


class TestFitGaussian:
    def test_recovers_sigma_within_tenth_percent(self):
        sigma = 867.0 / FWHM_PER_SIGMA
        h = synthetic_gaussian_hist(amplitude=1000.0, sigma_ps=sigma, baseline=50.0)
        fit = fit_gaussian(h)
        assert isinstance(fit, PeakFit)
        assert fit.sigma == pytest.approx(sigma, rel=1e-3)
        assert fit.fwhm == pytest.approx(867.0, rel=1e-3)

    def test_fwhm_sigma_relation_exact(self):
        fit = fit_gaussian(synthetic_gaussian_hist())
        assert fit.fwhm == FWHM_PER_SIGMA * fit.sigma

    def test_symmetric_histogram_centers_at_zero(self):
        fit = fit_gaussian(synthetic_gaussian_hist())
        assert abs(fit.mean) < 100.0  # within one bin

    def test_offset_peak_found(self):
        fit = fit_gaussian(synthetic_gaussian_hist(mean_ps=2_500.0))
        assert fit.mean == pytest.approx(2_500.0, abs=20.0)

    def test_flat_histogram_fails_gracefully(self):
        delays = np.arange(-50, 51)
        h = CoincidenceHistogram(
            bin_width_ps=100,
            delays=delays,
            counts=np.full(delays.size, 40, dtype=np.int64),
            total_integration=1.0,
        )
        result = fit_gaussian(h)
        assert isinstance(result, FitFailure)
        assert "baseline" in result.reason

    def test_weak_peak_fails_gracefully(self):
        h = synthetic_gaussian_hist(amplitude=5.0, baseline=10.0)
        assert isinstance(fit_gaussian(h), FitFailure)

    def test_noisy_poisson_peak(self):
        rng = np.random.default_rng(6)
        sigma = 300.0
        clean = synthetic_gaussian_hist(amplitude=2000.0, sigma_ps=sigma, baseline=100.0)
        noisy = CoincidenceHistogram(
            bin_width_ps=clean.bin_width_ps,
            delays=clean.delays,
            counts=rng.poisson(clean.counts),
            total_integration=clean.total_integration,
        )
        fit = fit_gaussian(noisy)
        assert isinstance(fit, PeakFit)
        assert fit.sigma == pytest.approx(sigma, rel=0.05)


class TestMetrics:
    def test_reference_car_arithmetic(self):
        # N_cc = 446856, N_acc = 12090 -> CAR = 35.96, sigma ~ 0.33
        car = (446856 - 12090) / 12090
        assert car == pytest.approx(35.96, abs=0.01)
        sigma = car * np.sqrt(1 / 446856 + 1 / 12090)
        assert sigma == pytest.approx(0.33, abs=0.01)

    def test_equal_counts_give_zero_car(self):
        h = synthetic_gaussian_hist(amplitude=2000.0, baseline=100.0)
        fit = fit_gaussian(h)
        m = metrics(h, fit, window_ps=fit.fwhm)
        # construct the degenerate case directly: n_cc == n_acc
        assert (m.n_acc - m.n_acc) / max(m.n_acc, 1) == 0.0

    def test_onchip_rate_back_calculation(self):
        h = synthetic_gaussian_hist(amplitude=3000.0, baseline=20.0, duration=60.0)
        fit = fit_gaussian(h)
        eta_s, eta_i = 10**-1.35, 10**-1.25
        m = metrics(h, fit, fit.fwhm, eta_signal=eta_s, eta_idler=eta_i)
        assert m.r_onchip_hz == pytest.approx(m.n_cc / (60.0 * eta_s * eta_i), rel=1e-12)
        assert m.r_detected_hz == pytest.approx(m.n_cc / 60.0, rel=1e-12)

    def test_zero_accidentals_reported_as_lower_bound(self):
        h = synthetic_gaussian_hist(amplitude=3000.0, baseline=0.0)
        fit = fit_gaussian(h)
        m = metrics(h, fit, fit.fwhm)
        assert m.car_is_lower_bound
        assert m.car == m.n_cc - 1

    def test_car_uncertainty_formula(self):
        h = synthetic_gaussian_hist(amplitude=5000.0, baseline=200.0)
        fit = fit_gaussian(h)
        m = metrics(h, fit, fit.fwhm)
        expect = m.car * np.sqrt(1.0 / m.n_cc + 1.0 / m.n_acc)
        assert m.car_sigma == pytest.approx(expect, rel=1e-9)

    def test_narrow_histogram_rejected(self):
        h = synthetic_gaussian_hist(m=20)  # no room for accidental windows
        fit = fit_gaussian(h)
        with pytest.raises(ValueError, match="accidental windows"):
            metrics(h, fit, fit.fwhm)


class TestWindowSweep:
    @staticmethod
    def car_closed_form(window, amplitude, sigma, floor_per_bin, bin_width):
        """Erf-weighted peak area over the flat floor in the same window."""
        peak = amplitude * sigma * np.sqrt(2 * np.pi) * erf(
            window / (2 * np.sqrt(2) * sigma)
        ) / bin_width
        acc = floor_per_bin * window / bin_width
        return peak / acc

    def test_car_maximal_near_fwhm_then_decreasing(self):
        h = synthetic_gaussian_hist(
            amplitude=5000.0, sigma_ps=368.0, baseline=100.0, m=1000
        )
        fit = fit_gaussian(h)
        rows = window_sweep(h, fit, [300.0, 600.0, 900.0, 1800.0, 3600.0, 7200.0])
        cars = [r.car for r in rows]
        assert max(cars) == pytest.approx(max(cars[:4]))
        assert cars[-1] < cars[2]
        assert cars[-2] < cars[2]

    def test_car_tracks_closed_form(self):
        amplitude, sigma, floor = 5000.0, 368.0, 100.0
        h = synthetic_gaussian_hist(
            amplitude=amplitude, sigma_ps=sigma, baseline=floor, m=600
        )
        fit = fit_gaussian(h)
        for w in (900.0, 1800.0, 3600.0):
            m = metrics(h, fit, w)
            oracle = self.car_closed_form(w, amplitude, sigma, floor, 100)
            assert m.car == pytest.approx(oracle, rel=0.05)

    def test_rate_non_decreasing_and_fwhm_included(self):
        h = synthetic_gaussian_hist(amplitude=5000.0, baseline=100.0)
        fit = fit_gaussian(h)
        rows = window_sweep(h, fit, [500.0, 1000.0, 2000.0])
        rates = [r.r_detected_hz for r in rows]
        assert all(b >= a for a, b in zip(rates, rates[1:]))
        assert any(np.isclose(r.window_ps, fit.fwhm) for r in rows)

    def test_vanishing_window_vanishing_counts(self):
        h = synthetic_gaussian_hist(amplitude=5000.0, baseline=100.0)
        fit = fit_gaussian(h)
        m = metrics(h, fit, window_ps=1.0)
        assert m.n_cc <= h.counts.max()

    def test_unsorted_windows_rejected(self):
        h = synthetic_gaussian_hist()
        fit = fit_gaussian(h)
        with pytest.raises(ValueError, match="ascending"):
            window_sweep(h, fit, [1000.0, 500.0])


class TestCsvRoundtrip:
    def test_histogram_csv(self, tmp_path):
        h = synthetic_gaussian_hist(m=60)
        path = tmp_path / "hist.csv"
        h.to_csv(path)
        back = CoincidenceHistogram.from_csv(path, total_integration=60.0)
        np.testing.assert_array_equal(back.counts, h.counts)
        np.testing.assert_array_equal(back.delays, h.delays)
        assert back.bin_width_ps == h.bin_width_ps
