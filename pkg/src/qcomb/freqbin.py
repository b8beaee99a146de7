"""Frequency-bin qubit generation, mixing, and joint-spectral-intensity scans.

Two rings detuned by twice the mixing-modulator frequency define the qubit
bins: |0> is the line one sideband above the midpoint, |1> one sideband
below, for both the signal and idler photons. Pumping both rings prepares
(|00> + r e^{i theta} |11>)/sqrt(1 + r^2) with r set by the pair-rate
balance. The mixing modulator folds both bins onto the midpoint; because
the +1/-1 sidebands carry RF phases +/-(pi/2 + phi_m), projecting signal and
idler onto their central bins produces a two-photon fringe whose phase
advances at 4 phi_m. That factor is never hard-coded here: it emerges from
the general sideband transfer coefficients, which doubles as a regression
check on the phase law.

The JSI scan steps narrowband filters over an n x n grid of (signal, idler)
bins: diagonal cells collect true pairs, off-diagonal cells collect filter
leakage at the configured extinction plus accidentals between distinct rings.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from qcomb.core_model import FWHM_PER_SIGMA, ResonatorSpec, pair_rate
from qcomb.eo_comb import ModulatorSettings
from qcomb.event_synth import SynthScenario, _rng

_JSI = 4  # RNG stream tag


@dataclass(frozen=True)
class BinState:
    """Two-qubit frequency-bin state over {|00>, |01>, |10>, |11>}."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.ascontiguousarray(self.amplitudes, dtype=complex)
        if amps.shape != (4,):
            raise ValueError(f"expected 4 amplitudes, got shape {amps.shape}")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm {norm} differs from 1 beyond 1e-12")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)


@dataclass(frozen=True)
class FilterBank:
    """Bandpass filters with finite out-of-band extinction.

    Passbands transmit fully; anything else is suppressed by extinction_db
    (power). Centers are offsets on the photon's frequency grid, so a single
    central passband at 0 serves both the signal and idler arms.
    """

    centers_ghz: tuple[float, ...]
    bandwidth_ghz: float
    extinction_db: float = np.inf

    def __post_init__(self) -> None:
        centers = tuple(float(c) for c in np.atleast_1d(self.centers_ghz))
        object.__setattr__(self, "centers_ghz", centers)
        if self.bandwidth_ghz <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth_ghz}")
        if self.extinction_db < 0:
            raise ValueError(f"extinction_db must be >= 0, got {self.extinction_db}")
        if len(centers) > 1:
            spacing = np.min(np.diff(np.sort(centers)))
            if self.bandwidth_ghz >= spacing:
                raise ValueError(
                    f"bandwidth {self.bandwidth_ghz} GHz does not resolve "
                    f"passbands spaced {spacing} GHz"
                )

    @property
    def leakage(self) -> float:
        """Out-of-band power transmission."""
        if np.isinf(self.extinction_db):
            return 0.0
        return 10.0 ** (-self.extinction_db / 10.0)

    def power_transmission(self, freq_ghz: float) -> float:
        for c in self.centers_ghz:
            if abs(freq_ghz - c) <= self.bandwidth_ghz / 2.0:
                return 1.0
        return self.leakage


def balanced_pump_power(
    ring_a: ResonatorSpec, ring_b: ResonatorSpec, power_a_mw: float
) -> float:
    """Pump power on ring_b that matches ring_a's pair rate at power_a."""
    if ring_b.pairgen_efficiency <= 0:
        raise ValueError("ring_b has zero pair-generation efficiency")
    return power_a_mw * np.sqrt(ring_a.pairgen_efficiency / ring_b.pairgen_efficiency)


def two_ring_state(
    ring_a: ResonatorSpec,
    ring_b: ResonatorSpec,
    power_a_mw: float,
    power_b_mw: float,
    pump_phase: float = 0.0,
) -> BinState:
    """Two-qubit state from simultaneously pumping two rings.

    Ring a feeds |00>, ring b feeds |11>; the amplitude ratio is the square
    root of the pair-rate ratio, the relative phase comes from the pump
    lines. Balanced rates give the |Phi+>-form Bell state up to that phase.
    """
    rate_a = pair_rate(ring_a, power_a_mw)
    rate_b = pair_rate(ring_b, power_b_mw)
    if rate_a + rate_b <= 0:
        raise ValueError("both rings are dark: total pair amplitude is zero")
    amps = np.zeros(4, dtype=complex)
    amps[0] = np.sqrt(rate_a)
    amps[3] = np.sqrt(rate_b) * np.exp(1j * pump_phase)
    return BinState(amps / np.linalg.norm(amps))


def _default_central_filter(settings: ModulatorSettings) -> FilterBank:
    return FilterBank(
        centers_ghz=(0.0,),
        bandwidth_ghz=0.5 * settings.mod_freq,
        extinction_db=np.inf,
    )


def _transfer_matrix(settings: ModulatorSettings, grid: np.ndarray) -> np.ndarray:
    """(2, len(grid)) transfer amplitudes from input bins |0>, |1> to the
    frequency grid (integer multiples of the modulation frequency, with the
    central bin at 0 and the input bins at +1 / -1)."""
    orders, amps = settings.coefficients()
    lookup = dict(zip((int(n) for n in orders), amps))
    out = np.zeros((2, grid.size), dtype=complex)
    for row, pos in enumerate((1, -1)):  # |0> sits above the midpoint, |1> below
        for col, m in enumerate(grid):
            out[row, col] = lookup.get(int(m) - pos, 0.0)
    return out


def mix_and_project(
    state: BinState,
    settings: ModulatorSettings,
    filters: FilterBank | None = None,
) -> float:
    """Coincidence probability at the central-bin pair after frequency mixing.

    Both photons pass the same modulator (bin spacing = 2 mod_freq by
    construction of the bin layout) and are then filtered. The return is the
    probability that signal and idler both land in a filter passband, the
    central bin in the ideal case; finite extinction adds incoherent leakage
    from the other line pairs. For the balanced Bell state this fringes as
    (1 + cos(4 phi_m + theta))/2 scaled by |J1|^4.
    """
    if filters is None:
        filters = _default_central_filter(settings)
    grid = np.arange(-settings.max_order - 1, settings.max_order + 2)
    freqs = grid * settings.mod_freq
    for c in filters.centers_ghz:
        inside = np.abs(freqs - c) <= filters.bandwidth_ghz / 2.0
        if int(inside.sum()) > 1:
            raise ValueError(
                f"filter passband at {c} GHz overlaps {int(inside.sum())} "
                f"frequency bins; narrow the bandwidth"
            )
    u = _transfer_matrix(settings, grid)
    alpha = state.amplitudes.reshape(2, 2)
    # joint amplitude on the (signal, idler) line grid
    joint = np.einsum("jk,jm,kn->mn", alpha, u, u)
    trans = np.array([filters.power_transmission(f) for f in freqs])
    return float(np.einsum("m,n,mn->", trans, trans, np.abs(joint) ** 2))


def mixing_fringe(
    state: BinState,
    settings: ModulatorSettings,
    phases,
    filters: FilterBank | None = None,
) -> np.ndarray:
    """mix_and_project swept over mixing-phase values."""
    return np.array(
        [
            mix_and_project(state, replace(settings, mod_phase=float(p)), filters)
            for p in phases
        ]
    )


@dataclass(frozen=True)
class JsiResult:
    """Windowed coincidence counts over the (signal bin, idler bin) grid."""

    counts: np.ndarray  # (n, n) int64, row = signal bin, col = idler bin
    grid_step_ghz: float
    window_ps: float
    extinction_db: float
    duration_s: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            n = self.counts.shape[0]
            writer.writerow(["signal_bin"] + [f"idler_{j}" for j in range(n)])
            for i in range(n):
                writer.writerow([i] + [int(c) for c in self.counts[i]])

    def metadata(self) -> dict:
        return {
            "grid_step_ghz": self.grid_step_ghz,
            "window_ps": self.window_ps,
            "extinction_db": self.extinction_db,
            "duration_s": self.duration_s,
            "n_bins": int(self.counts.shape[0]),
        }


def _grid_step(scenario: SynthScenario) -> float:
    detunings = np.array([r.detuning for r in scenario.array.resonators])
    steps = np.diff(detunings)
    if steps.size == 0:
        return 0.0
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise ValueError(
            "JSI scan needs rings detuned on a uniform ascending grid "
            f"(got detunings {detunings.tolist()})"
        )
    return float(steps[0])


def jsi_scan(
    scenario: SynthScenario,
    filters: FilterBank,
    window_ps: float,
    threads: int = 1,
    true_pairs_only: bool = False,
) -> JsiResult:
    """Joint spectral intensity over the n x n bin grid of an n-ring array.

    Ring j's signal (idler) line defines signal (idler) bin j; the grid step
    is the rings' uniform detuning spacing, which must match the pump-comb
    spacing by construction of the scenario. For each cell the filters pass
    the selected bins fully and others at the extinction, events are
    synthesized, and coincidences are counted in a window at zero delay.
    With true_pairs_only the count keeps only same-emission coincidences
    (no cross-ring accidentals, no darks): the leakage-only structure.
    """
    arr = scenario.array
    n = len(arr.resonators)
    step = _grid_step(scenario)
    half = window_ps / 2.0 / scenario.resolution_ps
    sigma = (
        scenario.jitter_fwhm / FWHM_PER_SIGMA / np.sqrt(2.0) / scenario.resolution_ps
    )
    n_ticks = scenario.duration_ticks
    leak = filters.leakage

    hw = int(round(half))

    def cell(cell_index: int) -> int:
        a, b = divmod(cell_index, n)
        total = 0
        sig_parts = []
        idl_parts = []
        for ring in range(n):
            rate = pair_rate(arr.resonators[ring], scenario.pump_power_per_ring[ring])
            rng = _rng(scenario.seed, _JSI, cell_index, ring)
            n_pairs = rng.poisson(rate * scenario.duration)
            t0 = rng.integers(0, n_ticks, n_pairs, dtype=np.int64)
            t_sig = 1.0 if ring == a else leak
            t_idl = 1.0 if ring == b else leak
            keep_s = rng.random(n_pairs) < arr.channel_efficiency_signal * t_sig
            keep_i = rng.random(n_pairs) < arr.channel_efficiency_idler * t_idl
            jit_s = np.rint(rng.normal(0.0, sigma, n_pairs)).astype(np.int64)
            jit_i = np.rint(rng.normal(0.0, sigma, n_pairs)).astype(np.int64)
            if true_pairs_only:
                both = keep_s & keep_i
                total += int(np.sum(np.abs(jit_i[both] - jit_s[both]) <= hw))
            else:
                sig_parts.append((t0 + jit_s)[keep_s])
                idl_parts.append((t0 + jit_i)[keep_i])
        if true_pairs_only:
            return total
        sig_parts.append(_dark_cell(scenario, cell_index, 0, arr.dark_rate_signal))
        idl_parts.append(_dark_cell(scenario, cell_index, 1, arr.dark_rate_idler))
        ts = np.sort(np.concatenate(sig_parts))
        ti = np.sort(np.concatenate(idl_parts))
        lo = np.searchsorted(ti, ts - hw, side="left")
        hi = np.searchsorted(ti, ts + hw, side="right")
        return int(np.sum(hi - lo))

    indices = range(n * n)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(cell, indices))
    else:
        flat = [cell(i) for i in indices]
    counts = np.array(flat, dtype=np.int64).reshape(n, n)
    return JsiResult(
        counts=counts,
        grid_step_ghz=step,
        window_ps=window_ps,
        extinction_db=filters.extinction_db,
        duration_s=scenario.duration,
    )


def _dark_cell(
    scenario: SynthScenario, cell_index: int, channel: int, rate_hz: float
) -> np.ndarray:
    rng = _rng(scenario.seed, _JSI, cell_index, 100 + channel)
    n_d = rng.poisson(rate_hz * scenario.duration)
    return rng.integers(0, scenario.duration_ticks, n_d, dtype=np.int64)
