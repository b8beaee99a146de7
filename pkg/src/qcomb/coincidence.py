"""Coincidence histogramming, Gaussian peak fitting, and CAR metrics.

The histogram counts every ordered (signal, idler) pairing whose delay
tau = t_idler - t_signal falls within the configured span (multi-stop
counting, so the accidental floor stays Poissonian). Bins are half-open
intervals of width `bin_width_ps` centered on integer multiples of the bin
width; the peak position is the fitted Gaussian mean, never a bin center.

The coincidence window yields N_cc; the accidental level N_acc is the mean
count of disjoint same-width windows tiled outward from +/- 5 FWHM on both
sides of the peak. CAR = (N_cc - N_acc) / N_acc with Poisson uncertainty,
and the on-chip rate back-calculation divides the detected coincidence rate
by both channel efficiencies.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from qcomb.core_model import FWHM_PER_SIGMA
from qcomb.tags import TagStream


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Binned coincidence counts vs signal-idler delay.

    delays are integer bin indices; bin k collects tau in
    [k*W - W//2, k*W - W//2 + W) picoseconds for bin width W.
    """

    bin_width_ps: int
    delays: np.ndarray
    counts: np.ndarray
    total_integration: float

    def __post_init__(self) -> None:
        delays = np.ascontiguousarray(self.delays, dtype=np.int64)
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if delays.shape != counts.shape or delays.ndim != 1:
            raise ValueError("delays and counts must be 1-d and equal length")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if self.bin_width_ps < 1:
            raise ValueError("bin_width_ps must be >= 1")
        delays.flags.writeable = False
        counts.flags.writeable = False
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "counts", counts)

    @property
    def delay_centers_ps(self) -> np.ndarray:
        return self.delays * float(self.bin_width_ps)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["delay_ps", "counts"])
            for d, c in zip(self.delays, self.counts):
                writer.writerow([int(d) * self.bin_width_ps, int(c)])

    @classmethod
    def from_csv(cls, path, total_integration: float) -> "CoincidenceHistogram":
        delays_ps = []
        counts = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                delays_ps.append(int(row["delay_ps"]))
                counts.append(int(row["counts"]))
        if not delays_ps:
            raise ValueError(f"{path}: empty histogram")
        widths = np.diff(sorted(delays_ps))
        width = int(widths.min()) if widths.size else 1
        delays = np.asarray(delays_ps, dtype=np.int64) // width
        return cls(
            bin_width_ps=width,
            delays=delays,
            counts=np.asarray(counts, dtype=np.int64),
            total_integration=total_integration,
        )


@dataclass(frozen=True)
class PeakFit:
    """Gaussian + flat baseline fit: A exp(-(tau-mu)^2/2 sigma^2) + b."""

    amplitude: float
    mean: float  # ps
    sigma: float  # ps
    baseline: float  # counts per bin
    covariance: np.ndarray  # 4x4, parameter order (A, mu, sigma, b)

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def fwhm(self) -> float:
        """Full width at half maximum, 2*sqrt(2 ln 2)*sigma."""
        return FWHM_PER_SIGMA * self.sigma

    def value(self, tau_ps: np.ndarray) -> np.ndarray:
        return (
            self.amplitude
            * np.exp(-((tau_ps - self.mean) ** 2) / (2.0 * self.sigma**2))
            + self.baseline
        )


@dataclass(frozen=True)
class FitFailure:
    """Explicit fit-failure result. Carries the residuals of the best attempt."""

    reason: str
    residuals: np.ndarray | None = None


@dataclass(frozen=True)
class PairMetrics:
    """Windowed coincidence metrics and the back-calculated on-chip rate."""

    n_cc: int
    n_acc: float
    car: float
    car_sigma: float
    window_ps: float
    r_detected_hz: float
    r_onchip_hz: float
    car_is_lower_bound: bool = False

    def to_dict(self) -> dict:
        return {
            "n_cc": self.n_cc,
            "n_acc": self.n_acc,
            "car": self.car,
            "car_sigma": self.car_sigma,
            "window_ps": self.window_ps,
            "r_detected_hz": self.r_detected_hz,
            "r_onchip_hz": self.r_onchip_hz,
            "car_is_lower_bound": self.car_is_lower_bound,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def histogram(
    stream: TagStream,
    ch_signal: int,
    ch_idler: int,
    bin_width_ps: int,
    span_ps: int,
) -> CoincidenceHistogram:
    """Start-stop correlation of two channels.

    Counts all pairings with tau = t_idler - t_signal inside the covered
    range (every bin whose index magnitude is <= round(span/bin_width)).
    Runs as a two-pointer sweep over the two sorted channels, O(N + matches).
    Empty channels produce an all-zero histogram.
    """
    if span_ps < bin_width_ps:
        raise ValueError(f"span {span_ps} ps smaller than bin width {bin_width_ps} ps")
    if bin_width_ps < stream.resolution_ps:
        raise ValueError(
            f"bin width {bin_width_ps} ps below stream resolution "
            f"{stream.resolution_ps} ps"
        )
    if bin_width_ps % stream.resolution_ps:
        raise ValueError("bin width must be a multiple of the stream resolution")

    width = bin_width_ps // stream.resolution_ps
    half = width // 2
    m = int(round(span_ps / bin_width_ps))
    n_bins = 2 * m + 1
    delays = np.arange(-m, m + 1, dtype=np.int64)

    ts = stream.channel_times(ch_signal).astype(np.int64)
    ti = stream.channel_times(ch_idler).astype(np.int64)
    if ts.size == 0 or ti.size == 0:
        counts = np.zeros(n_bins, dtype=np.int64)
    else:
        lo_off = -m * width - half
        hi_off = m * width - half + width  # exclusive
        lo = np.searchsorted(ti, ts + lo_off, side="left")
        hi = np.searchsorted(ti, ts + hi_off, side="left")
        per_s = hi - lo
        total = int(per_s.sum())
        starts = np.cumsum(per_s) - per_s
        idx = np.arange(total) - np.repeat(starts, per_s) + np.repeat(lo, per_s)
        tau = ti[idx] - np.repeat(ts, per_s)
        k = np.floor_divide(tau + half, width)
        counts = np.bincount((k + m).astype(np.intp), minlength=n_bins).astype(np.int64)

    return CoincidenceHistogram(
        bin_width_ps=bin_width_ps,
        delays=delays,
        counts=counts,
        total_integration=stream.duration_s,
    )


def fit_gaussian(hist: CoincidenceHistogram, max_iterations: int = 200):
    """Weighted nonlinear least-squares Gaussian fit of the coincidence peak.

    Initialization: mu at the maximum bin, amplitude = max - median,
    baseline = median, sigma from the background-subtracted second moment.
    Per-bin Poisson weights 1/sqrt(max(count, 1)) keep the tails from being
    drowned out. Converges on relative parameter step < 1e-8 or the
    iteration cap. Returns a PeakFit, or a FitFailure (carrying residuals)
    when the peak is too weak, the optimizer stalls, or sigma pegs a bound.
    """
    x = hist.delay_centers_ps.astype(float)
    y = hist.counts.astype(float)
    if x.size < 5:
        return FitFailure("need at least 5 bins to fit")

    b0 = float(np.median(y))
    a0 = float(y.max() - b0)
    if a0 < 10.0:
        return FitFailure("peak is less than 10 counts above baseline")
    mu0 = float(x[int(np.argmax(y))])
    excess = np.maximum(y - b0, 0.0)
    total = excess.sum()
    sigma0 = (
        float(np.sqrt(np.sum(excess * (x - mu0) ** 2) / total))
        if total > 0
        else float(hist.bin_width_ps)
    )
    sigma0 = max(sigma0, float(hist.bin_width_ps) / 2.0)

    w = 1.0 / np.sqrt(np.maximum(y, 1.0))
    span = float(x.max() - x.min())
    sigma_lo = hist.bin_width_ps / 100.0
    lower = np.array([0.0, x.min(), sigma_lo, 0.0])
    upper = np.array([np.inf, x.max(), span, np.inf])
    p0 = np.clip(np.array([a0, mu0, sigma0, max(b0, 0.0)]), lower, upper)

    def resid(p):
        a, mu, sig, b = p
        return (a * np.exp(-((x - mu) ** 2) / (2.0 * sig**2)) + b - y) * w

    res = least_squares(
        resid,
        p0,
        bounds=(lower, upper),
        xtol=1e-8,
        ftol=1e-12,
        gtol=1e-12,
        max_nfev=max_iterations * (len(p0) + 1),
    )
    if res.status == 0:
        return FitFailure("fit did not converge within the iteration cap", res.fun)
    sig = float(res.x[2])
    if sig <= sigma_lo * (1 + 1e-9) or sig >= span * (1 - 1e-9):
        return FitFailure(f"sigma {sig:.3f} ps pinned at a fit bound", res.fun)

    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    return PeakFit(
        amplitude=float(res.x[0]),
        mean=float(res.x[1]),
        sigma=sig,
        baseline=float(res.x[3]),
        covariance=cov,
    )


def _accidental_blocks(
    hist: CoincidenceHistogram, fit: PeakFit, window_bins: int, n_windows: int
) -> list[float]:
    """Sums of disjoint window-width bin blocks tiled outward from 5 FWHM."""
    centers = hist.delay_centers_ps
    counts = hist.counts
    margin = 5.0 * fit.fwhm
    right = np.flatnonzero(centers >= fit.mean + margin)
    left = np.flatnonzero(centers <= fit.mean - margin)[::-1]  # outward = leftward
    blocks = []
    for side in (right, left):
        side_blocks = []
        for start in range(0, side.size - window_bins + 1, window_bins):
            side_blocks.append(float(counts[side[start : start + window_bins]].sum()))
        blocks.append(side_blocks)
    # interleave right/left by distance from the peak, then cap at n_windows
    merged = []
    for pair in zip(*blocks):
        merged.extend(pair)
    longer = blocks[0] if len(blocks[0]) > len(blocks[1]) else blocks[1]
    merged.extend(longer[min(len(blocks[0]), len(blocks[1])) :])
    return merged[:n_windows]


def metrics(
    hist: CoincidenceHistogram,
    fit: PeakFit,
    window_ps: float,
    eta_signal: float = 1.0,
    eta_idler: float = 1.0,
    n_windows: int = 20,
) -> PairMetrics:
    """Windowed N_cc, accidental level, CAR, and rate back-calculation.

    N_cc sums the bins whose centers lie within window/2 of the fitted peak.
    N_acc is the mean over `n_windows` disjoint same-width blocks at least
    5 FWHM away (both sides, nearest first). When no accidentals are found
    the CAR is reported as the lower bound N_cc - 1 and flagged.
    """
    if window_ps <= 0:
        raise ValueError(f"window must be positive, got {window_ps} ps")
    centers = hist.delay_centers_ps
    in_window = np.abs(centers - fit.mean) <= window_ps / 2.0
    n_cc = int(hist.counts[in_window].sum())

    window_bins = max(1, int(round(window_ps / hist.bin_width_ps)))
    blocks = _accidental_blocks(hist, fit, window_bins, n_windows)
    if len(blocks) < 10:
        raise ValueError(
            f"only {len(blocks)} accidental windows at >= 5 FWHM from the "
            f"peak; widen the histogram span"
        )
    n_acc = float(np.mean(blocks))

    dt = hist.total_integration
    r_detected = n_cc / dt if dt > 0 else float("nan")
    r_onchip = (
        n_cc / (dt * eta_signal * eta_idler) if dt > 0 else float("nan")
    )
    if n_acc > 0:
        car = (n_cc - n_acc) / n_acc
        car_sigma = (
            abs(car) * np.sqrt(1.0 / n_cc + 1.0 / n_acc) if n_cc > 0 else float("nan")
        )
        lower_bound = False
    else:
        # no accidentals seen: quote the floor implied by one accidental count
        car = float(n_cc - 1)
        car_sigma = float("nan")
        lower_bound = True
    return PairMetrics(
        n_cc=n_cc,
        n_acc=n_acc,
        car=float(car),
        car_sigma=float(car_sigma),
        window_ps=float(window_ps),
        r_detected_hz=float(r_detected),
        r_onchip_hz=float(r_onchip),
        car_is_lower_bound=lower_bound,
    )


def window_sweep(
    hist: CoincidenceHistogram,
    fit: PeakFit,
    windows_ps,
    eta_signal: float = 1.0,
    eta_idler: float = 1.0,
) -> list[PairMetrics]:
    """Metrics for each window width; always includes the FWHM window."""
    windows = [float(w) for w in windows_ps]
    if any(b <= a for a, b in zip(windows, windows[1:])):
        raise ValueError("windows must be sorted ascending")
    if not any(np.isclose(w, fit.fwhm) for w in windows):
        windows.append(fit.fwhm)
        windows.sort()
    return [
        metrics(hist, fit, w, eta_signal=eta_signal, eta_idler=eta_idler)
        for w in windows
    ]
