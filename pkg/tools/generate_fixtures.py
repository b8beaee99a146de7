#!/usr/bin/env python3
"""Regenerate the bundled test fixtures (deterministic, no sampling except
where seeded).

  pair_hist.csv      coincidence histogram whose FWHM-window metrics are
                     exactly N_cc = 446856, N_acc = 12090 (CAR 35.96) at the
                     867 ps peak width over 60 s
  freqbin_hist.csv   histogram giving 138.7 Hz detected rate and CAR 76.8
                     at the 700 ps window over 60 s
  freqbin_fringe.csv 16-point fringe with 90.1% raw visibility
  tomo_bell.csv      36 Poisson-sampled projection counts of the two-qubit
                     Bell state at 1e4 counts per projection

The histogram floors repeat with the coincidence-window period so every
accidental-estimation block sums to the same total, making the windowed
arithmetic exact.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from qcomb.core_model import FWHM_PER_SIGMA
from qcomb.tomography import BELL_PHI_PLUS, sample_settings

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

BIN_PS = 100


def periodic_floor(n_bins_half: int, pattern: list[int]) -> np.ndarray:
    total = 2 * n_bins_half + 1
    k = np.arange(-n_bins_half, n_bins_half + 1)
    return np.asarray(pattern, dtype=np.int64)[k % len(pattern)][:total]


def gaussian_peak(
    window_bins_half: int, extent_bins_half: int, fwhm_ps: float, total_in_window: int
) -> np.ndarray:
    """Integer Gaussian over +/- extent bins whose central-window portion
    (+/- window bins) sums exactly to total_in_window."""
    sigma = fwhm_ps / FWHM_PER_SIGMA
    k = np.arange(-extent_bins_half, extent_bins_half + 1)
    shape = np.exp(-((k * BIN_PS) ** 2) / (2.0 * sigma**2))
    central = np.abs(k) <= window_bins_half
    counts = np.rint(total_in_window * shape / shape[central].sum()).astype(np.int64)
    counts[extent_bins_half] += total_in_window - counts[central].sum()
    return counts


def write_hist(path: Path, m: int, floor: np.ndarray, peak: np.ndarray, half_w: int):
    counts = floor.copy()
    counts[m - half_w : m + half_w + 1] += peak
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delay_ps", "counts"])
        for k, c in zip(range(-m, m + 1), counts):
            writer.writerow([k * BIN_PS, int(c)])


def make_pair_hist():
    # 9-bin coincidence window at 867 ps FWHM; floor pattern sums to 12090
    pattern = [1343, 1343, 1343, 1344, 1343, 1343, 1344, 1343, 1344]
    assert sum(pattern) == 12090
    m = 150
    floor = periodic_floor(m, pattern)
    peak = gaussian_peak(4, 20, 867.0, 446856 - 12090)
    write_hist(OUT / "pair_hist.csv", m, floor, peak, 20)


def make_freqbin_hist():
    # 7-bin window at 700 ps FWHM; floor pattern sums to 107;
    # N_cc = 138.7 Hz * 60 s = 8322 -> CAR = (8322 - 107)/107 = 76.8
    pattern = [15, 15, 15, 16, 15, 15, 16]
    assert sum(pattern) == 107
    m = 130
    floor = periodic_floor(m, pattern)
    peak = gaussian_peak(3, 700.0, 8322 - 107)
    write_hist(OUT / "freqbin_hist.csv", m, floor, peak, 3)


def make_freqbin_fringe():
    phases = np.arange(16) * 2.0 * np.pi / 16.0
    counts = np.rint(20000.0 * (1.0 + 0.901 * np.cos(phases))).astype(int)
    with open(OUT / "freqbin_fringe.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase_rad", "counts"])
        for p, c in zip(phases, counts):
            writer.writerow([f"{p:.10f}", int(c)])


def make_tomo_bell():
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(20240817)))
    rho = np.outer(BELL_PHI_PLUS, BELL_PHI_PLUS.conj())
    settings = sample_settings(rho, 1e4, rng=rng)
    with open(OUT / "tomo_bell.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["basis_s", "basis_i", "theta_s", "theta_i", "counts", "duration_s"])
        for s in settings:
            writer.writerow(
                [s.basis_s, s.basis_i, f"{s.theta_s:.10f}", f"{s.theta_i:.10f}",
                 int(s.counts), 60.0]
            )


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    make_pair_hist()
    make_freqbin_hist()
    make_freqbin_fringe()
    make_tomo_bell()
    for name in sorted(p.name for p in OUT.glob("*.csv")):
        print(f"wrote {name}")


if __name__ == "__main__":
    main()
