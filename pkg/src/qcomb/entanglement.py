"""Time-bin entanglement and heralded-purity analysis.

Franson scans arrive as one tag stream per interferometer phase. The
three-peak delay histogram is built per phase; the central (path-
indistinguishable) peak carries the two-photon fringe, while the side peaks
at +/- the interferometer delay and the singles rates must stay
phase-independent, which is checked with a chi-square test.

The fringe C(phi) = C0 (1 + V cos(phi + phi0)) is fitted with Poisson
weights, both on raw counts and after subtracting the accidental floor;
a fitted visibility above 1/sqrt(2) violates the CHSH bound, quoted in
standard deviations.

The heralded second-order correlation uses a three-channel stream (herald,
two idler beam-splitter arms): g2_h(tau) = N_s12(tau) N_s / (N_s1(0)
N_s2(tau)), counts taken over a common integration time so rates cancel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import chi2

from qcomb.coincidence import CoincidenceHistogram, FitFailure, PeakFit, fit_gaussian, histogram
from qcomb.tags import TagStream

CHSH_VISIBILITY_BOUND = 1.0 / np.sqrt(2.0)  # 0.70711
CHSH_FLAG_SIGMAS = 2.0


class FransonStructureError(ValueError):
    """Raised when the expected three-peak structure is not found."""


@dataclass(frozen=True)
class FringeScan:
    """Central-peak counts and singles rates versus interferometer phase."""

    phases: np.ndarray  # radians, strictly increasing
    central_counts: np.ndarray  # integer counts per phase
    singles_signal_hz: np.ndarray
    singles_idler_hz: np.ndarray
    side_counts: np.ndarray  # (n_phases, 2): peaks at -delay, +delay
    side_pvalue: float  # chi-square constancy test of the side peaks
    window_ps: float
    accidental_floor: float  # estimated floor per window (counts)

    def __post_init__(self) -> None:
        phases = np.asarray(self.phases, dtype=float)
        counts = np.asarray(self.central_counts, dtype=np.int64)
        if phases.ndim != 1 or phases.size != counts.size:
            raise ValueError("phases and central_counts must match")
        if np.any(np.diff(phases) <= 0):
            raise ValueError("phases must be strictly increasing")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "central_counts", counts)

    @property
    def central_errors(self) -> np.ndarray:
        """Poisson errors on the central-peak counts."""
        return np.sqrt(np.maximum(self.central_counts, 1))


@dataclass(frozen=True)
class VisibilityResult:
    """Fitted fringe visibility, raw and accidental-corrected."""

    v_raw: float
    v_raw_sigma: float
    v_corr: float
    v_corr_sigma: float
    phase_offset: float
    chsh_violation_sigmas: float  # (v_corr - 1/sqrt(2)) / sigma(v_corr)
    contrast_c0: float

    @property
    def violates_chsh(self) -> bool:
        """Violation established at 2 standard deviations."""
        return self.chsh_violation_sigmas >= CHSH_FLAG_SIGMAS

    def to_dict(self) -> dict:
        return {
            "v_raw": self.v_raw,
            "v_raw_sigma": self.v_raw_sigma,
            "v_corr": self.v_corr,
            "v_corr_sigma": self.v_corr_sigma,
            "phase_offset_rad": self.phase_offset,
            "chsh_violation_sigmas": self.chsh_violation_sigmas,
            "violates_chsh": self.violates_chsh,
        }


def _windowed_counts(hist: CoincidenceHistogram, center_ps: float, window_ps: float) -> int:
    centers = hist.delay_centers_ps
    sel = np.abs(centers - center_ps) <= window_ps / 2.0
    return int(hist.counts[sel].sum())


def _franson_floor_per_bin(
    hist: CoincidenceHistogram, fwhm_ps: float, delay_ps: float
) -> float:
    """Mean flat-floor count per bin, away from all three peaks."""
    c = np.abs(hist.delay_centers_ps)
    margin = 5.0 * fwhm_ps
    flat = ((c > margin) & (c < delay_ps - margin)) | (c > delay_ps + margin)
    if not np.any(flat):
        return 0.0
    return float(hist.counts[flat].mean())


def franson_analyze(
    streams_by_phase,
    delay_ns: float,
    window_ps: float,
    bin_width_ps: int = 100,
) -> FringeScan:
    """Extract the phase fringe from a set of Franson tag streams.

    streams_by_phase: iterable of (phase_rad, TagStream), one run per phase
    setting. The peak position and width are fitted once on the
    phase-summed histogram (the central peak never vanishes in the sum),
    then the same window is applied to every phase. Raises
    FransonStructureError when the side peaks at +/- delay are absent,
    which means the configured delay does not match the data.
    """
    items = sorted(streams_by_phase, key=lambda kv: kv[0])
    if not items:
        raise ValueError("no streams supplied")
    delay_ps = delay_ns * 1000.0
    if delay_ps < 5.0 * window_ps:
        raise ValueError("side peaks not resolvable: delay must exceed 5x window")
    span = int(delay_ps + max(10_000.0, 4.0 * window_ps))

    hists = [
        histogram(stream, 0, 1, bin_width_ps, span) for _, stream in items
    ]
    total = CoincidenceHistogram(
        bin_width_ps=bin_width_ps,
        delays=hists[0].delays,
        counts=np.sum([h.counts for h in hists], axis=0),
        total_integration=sum(h.total_integration for h in hists),
    )

    central_sel = np.abs(total.delay_centers_ps) <= delay_ps / 2.0
    central_fit = fit_gaussian(
        CoincidenceHistogram(
            bin_width_ps=bin_width_ps,
            delays=total.delays[central_sel],
            counts=total.counts[central_sel],
            total_integration=total.total_integration,
        )
    )
    if isinstance(central_fit, FitFailure):
        raise FransonStructureError(
            f"no central coincidence peak found: {central_fit.reason}"
        )

    floor_bin = _franson_floor_per_bin(total, central_fit.fwhm, delay_ps)
    window_bins = max(1, int(round(window_ps / bin_width_ps)))
    floor_window = floor_bin * window_bins
    for sign in (-1.0, 1.0):
        side_total = _windowed_counts(total, sign * delay_ps, window_ps)
        if side_total <= floor_window + 10.0 * np.sqrt(floor_window + 1.0):
            raise FransonStructureError(
                f"side peak at {sign * delay_ns:+.1f} ns not found "
                f"(got {side_total} counts over a floor of {floor_window:.1f}); "
                f"wrong delay configured?"
            )

    mu = central_fit.mean
    phases = np.array([p for p, _ in items])
    central = np.array([_windowed_counts(h, mu, window_ps) for h in hists])
    side = np.array(
        [
            [
                _windowed_counts(h, mu - delay_ps, window_ps),
                _windowed_counts(h, mu + delay_ps, window_ps),
            ]
            for h in hists
        ]
    )
    singles_s = np.array(
        [s.counts_per_channel()[0] / s.duration_s for _, s in items]
    )
    singles_i = np.array(
        [s.counts_per_channel()[1] / s.duration_s for _, s in items]
    )

    # side peaks must not fringe: chi-square against a constant per peak
    chisq = 0.0
    for col in range(2):
        mean = side[:, col].mean()
        if mean > 0:
            chisq += float(np.sum((side[:, col] - mean) ** 2 / mean))
    dof = 2 * (len(items) - 1)
    pvalue = float(chi2.sf(chisq, dof)) if dof > 0 else 1.0

    # floor per phase ~ shared floor scaled by that phase's integration
    floor_per_phase = floor_window / len(items)
    return FringeScan(
        phases=phases,
        central_counts=central,
        singles_signal_hz=singles_s,
        singles_idler_hz=singles_i,
        side_counts=side,
        side_pvalue=pvalue,
        window_ps=window_ps,
        accidental_floor=floor_per_phase,
    )


def _fit_cosine(phases: np.ndarray, values: np.ndarray, weights: np.ndarray):
    c0 = max(float(values.mean()), 1e-9)
    vmax, vmin = float(values.max()), float(values.min())
    v0 = np.clip((vmax - vmin) / max(vmax + vmin, 1e-9), 0.0, 1.0)
    phi0 = float(-phases[int(np.argmax(values))])

    def resid(p):
        c, v, phi = p
        return (c * (1.0 + v * np.cos(phases + phi)) - values) * weights

    lower = np.array([0.0, 0.0, phi0 - np.pi])
    upper = np.array([np.inf, 1.0, phi0 + np.pi])
    p0 = np.clip(np.array([c0, v0, phi0]), lower, upper)
    res = least_squares(resid, p0, bounds=(lower, upper), xtol=1e-10, ftol=1e-12)
    jtj = res.jac.T @ res.jac
    if np.linalg.cond(jtj) > 1e12:
        raise ValueError("degenerate phase sampling: fit covariance is singular")
    cov = np.linalg.inv(jtj)
    return res.x, cov


def fit_visibility(
    scan: FringeScan, accidental_floor: float | None = None
) -> VisibilityResult:
    """Fit C(phi) = C0 (1 + V cos(phi + phi0)) to a fringe scan.

    v_raw fits the counts as recorded; v_corr subtracts the accidental
    floor (per-point counts) from every phase first. When the floor is not
    given explicitly the scan's own estimate is used. A visibility above
    1/sqrt(2) violates the CHSH bound; the margin is quoted in standard
    deviations of the corrected visibility.
    """
    if scan.phases.size < 5:
        raise ValueError("need at least 5 phase points")
    if scan.phases.max() - scan.phases.min() < np.pi:
        raise ValueError("phases must span at least half a fringe period")
    if accidental_floor is None:
        accidental_floor = scan.accidental_floor

    counts = scan.central_counts.astype(float)
    weights = 1.0 / np.sqrt(np.maximum(counts, 1.0))
    (c_raw, v_raw, phi_raw), cov_raw = _fit_cosine(scan.phases, counts, weights)
    (c_cor, v_cor, phi_cor), cov_cor = _fit_cosine(
        scan.phases, counts - accidental_floor, weights
    )
    v_raw_sigma = float(np.sqrt(cov_raw[1, 1]))
    v_cor_sigma = float(np.sqrt(cov_cor[1, 1]))
    sigmas = (
        (v_cor - CHSH_VISIBILITY_BOUND) / v_cor_sigma
        if v_cor_sigma > 0
        else float("inf") if v_cor > CHSH_VISIBILITY_BOUND else float("-inf")
    )
    return VisibilityResult(
        v_raw=float(v_raw),
        v_raw_sigma=v_raw_sigma,
        v_corr=float(v_cor),
        v_corr_sigma=v_cor_sigma,
        phase_offset=float(phi_cor),
        chsh_violation_sigmas=float(sigmas),
        contrast_c0=float(c_cor),
    )


@dataclass(frozen=True)
class G2Curve:
    """Heralded g2 on a delay grid, with Poisson errors and zero-count flags."""

    tau_ps: np.ndarray
    g2: np.ndarray
    sigma: np.ndarray
    n_triples: np.ndarray
    flagged: np.ndarray  # True where a denominator had zero counts

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau_ps", "g2", "sigma", "n_triples", "flagged"])
            for row in zip(self.tau_ps, self.g2, self.sigma, self.n_triples, self.flagged):
                writer.writerow(
                    [int(row[0]), f"{row[1]:.8g}", f"{row[2]:.8g}", int(row[3]), int(row[4])]
                )


def g2_heralded(
    stream: TagStream, window_ps: float, tau_grid_ps
) -> G2Curve:
    """Heralded second-order correlation from a 3-channel HBT stream.

    For each herald tag, idler-arm-1 partners are counted in a window at
    zero delay and idler-arm-2 partners in the same-width window at each
    grid delay tau; triples are all pairings of the two. Two-fold and
    three-fold coincidences share one window, and all counts share the
    stream's integration time, so the rate ratio reduces to
    g2 = N_s12(tau) N_s / (N_s1(0) N_s2(tau)).
    """
    if stream.channel_count < 3:
        raise ValueError("heralded g2 needs a 3-channel stream (s, i1, i2)")
    ts = stream.channel_times(0).astype(np.int64)
    t1 = stream.channel_times(1).astype(np.int64)
    t2 = stream.channel_times(2).astype(np.int64)
    if ts.size == 0 or t1.size == 0 or t2.size == 0:
        raise ValueError("all three channels must contain tags")

    half = int(round(window_ps / stream.resolution_ps / 2.0))
    taus = np.asarray(
        np.rint(np.asarray(tau_grid_ps, dtype=float) / stream.resolution_ps),
        dtype=np.int64,
    )

    c1 = np.searchsorted(t1, ts + half, side="right") - np.searchsorted(
        t1, ts - half, side="left"
    )
    n_s = ts.size
    n_s1 = int(c1.sum())

    g2 = np.zeros(taus.size)
    sigma = np.zeros(taus.size)
    triples = np.zeros(taus.size, dtype=np.int64)
    flagged = np.zeros(taus.size, dtype=bool)
    for j, tau in enumerate(taus):
        c2 = np.searchsorted(t2, ts + tau + half, side="right") - np.searchsorted(
            t2, ts + tau - half, side="left"
        )
        n_s2 = int(c2.sum())
        n_s12 = int((c1 * c2).sum())
        triples[j] = n_s12
        if n_s1 == 0 or n_s2 == 0:
            flagged[j] = True
            g2[j] = np.nan
            sigma[j] = np.nan
            continue
        scale = n_s / (n_s1 * n_s2)
        g2[j] = n_s12 * scale
        if n_s12 > 0:
            sigma[j] = g2[j] * np.sqrt(
                1.0 / n_s12 + 1.0 / n_s + 1.0 / n_s1 + 1.0 / n_s2
            )
        else:
            sigma[j] = scale  # one-triple scale as the zero-count error bar
    return G2Curve(
        tau_ps=taus * stream.resolution_ps,
        g2=g2,
        sigma=sigma,
        n_triples=triples,
        flagged=flagged,
    )
