"""Monte Carlo synthesis of time-tagged detection streams.

The model: each ring emits photon pairs as a homogeneous Poisson process at
its power-law pair rate. Signal and idler survive the (lumped) channel
efficiencies independently, pick up independent Gaussian timing jitter whose
*pairwise* spread matches the configured coincidence-peak FWHM, and land on
integer picosecond ticks. Dark counts are independent Poisson processes per
channel. Accidentals are whatever falls out of distinct pairs and darks; no
accidental background is injected by hand.

Sampling is category-wise: independent thinning of a Poisson process splits
it into independent Poisson processes (marking theorem), so the detected
both/signal-only/idler-only events are drawn directly at their compound
rates. The output distribution is identical to thinning every emitted pair,
but the cost scales with detected counts, not emitted pairs.

Multi-pair emission is modeled as independent Poisson pairs (no thermal
bunching within a mode), so heralded g2 reflects accidental-herald
contamination only. Detector dead time is off by default; an optional
non-paralyzable dead-time parameter exists for sensitivity studies.

Randomness is counter-based (Philox) and keyed per (stream kind, ring
index), so per-ring synthesis can run on any number of threads with
identical output.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from qcomb.core_model import FWHM_PER_SIGMA, ArrayConfig, pair_rate
from qcomb.eo_comb import ModulatorSettings
from qcomb.tags import TagStream

# channel assignments
CH_SIGNAL = 0
CH_IDLER = 1
CH_HERALD = 0
CH_IDLER_1 = 1
CH_IDLER_2 = 2

# spawn-key tags for the per-purpose RNG streams
_PAIRS = 0
_DARKS = 1
_FRANSON = 2
_HBT = 3

# intermediate tick arithmetic is signed 64-bit
MAX_TICKS = 2**63 - 1


@dataclass(frozen=True)
class FransonSettings:
    """Folded unbalanced-interferometer settings for time-bin entanglement.

    delay_ns is the long-short path imbalance, phase the cumulative phase
    applied to pairs in the short path, visibility the configured two-photon
    interference contrast. throughput is the per-photon probability of
    reaching its detector through the interferometer; it must not exceed 0.5
    (half the amplitude exits the unused port of a 50:50-based
    interferometer, and larger values make the outcome bookkeeping
    unnormalizable).
    """

    delay_ns: float
    phase: float = 0.0
    visibility: float = 1.0
    throughput: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must be in [0, 1], got {self.visibility}")
        if self.delay_ns <= 0:
            raise ValueError(f"delay_ns must be positive, got {self.delay_ns}")
        if not 0.0 < self.throughput <= 0.5:
            raise ValueError(f"throughput must be in (0, 0.5], got {self.throughput}")


@dataclass(frozen=True)
class SynthScenario:
    """Everything needed to synthesize one run."""

    array: ArrayConfig
    pump_power_per_ring: tuple[float, ...]
    duration: float
    jitter_fwhm: float = 867.0  # ps, pairwise coincidence-peak FWHM
    seed: int = 0
    franson: FransonSettings | None = None
    mixing: ModulatorSettings | None = None
    dead_time_ps: float = 0.0
    resolution_ps: int = 1

    def __post_init__(self) -> None:
        powers = self.pump_power_per_ring
        if np.isscalar(powers):
            powers = (float(powers),) * len(self.array.resonators)
        else:
            powers = tuple(float(p) for p in powers)
        object.__setattr__(self, "pump_power_per_ring", powers)
        if len(powers) != len(self.array.resonators):
            raise ValueError(
                f"{len(powers)} pump powers for {len(self.array.resonators)} rings"
            )
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.jitter_fwhm <= 0:
            raise ValueError(f"jitter_fwhm must be positive, got {self.jitter_fwhm}")
        if self.dead_time_ps < 0:
            raise ValueError(f"dead_time_ps must be >= 0, got {self.dead_time_ps}")
        max_duration = MAX_TICKS * self.resolution_ps * 1e-12
        if self.duration * 1e12 / self.resolution_ps > MAX_TICKS:
            raise OverflowError(
                f"duration {self.duration} s overflows the tick range; the "
                f"maximum representable duration at {self.resolution_ps} ps "
                f"resolution is {max_duration:.0f} s"
            )

    @property
    def duration_ticks(self) -> int:
        return int(round(self.duration * 1e12 / self.resolution_ps))

    def digest(self) -> str:
        """Stable hash of all scenario parameters."""
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=key))
    )


def _arm_sigma_ticks(scenario: SynthScenario) -> float:
    # pairwise FWHM -> pairwise sigma -> per-arm sigma (two independent arms)
    return scenario.jitter_fwhm / FWHM_PER_SIGMA / np.sqrt(2.0) / scenario.resolution_ps


def _uniform_times(rng, rate_hz: float, scenario: SynthScenario) -> np.ndarray:
    n = rng.poisson(rate_hz * scenario.duration)
    return rng.integers(0, scenario.duration_ticks, n, dtype=np.int64)


def _jitter(rng, times: np.ndarray, sigma: float) -> np.ndarray:
    return times + np.rint(rng.normal(0.0, sigma, times.size)).astype(np.int64)


def _clip_window(times: np.ndarray, n_ticks: int) -> np.ndarray:
    return times[(times >= 0) & (times <= n_ticks)]


def _dark_times(scenario: SynthScenario, channel: int, rate_hz: float) -> np.ndarray:
    rng = _rng(scenario.seed, _DARKS, channel)
    return _uniform_times(rng, rate_hz, scenario)


def _apply_dead_time(times: np.ndarray, dead_ticks: int) -> np.ndarray:
    """Non-paralyzable dead time on one channel's sorted times."""
    if times.size == 0:
        return times
    keep = np.zeros(times.size, dtype=bool)
    last = times[0] - dead_ticks - 1
    for i, t in enumerate(times):
        if t - last > dead_ticks:
            keep[i] = True
            last = t
    return times[keep]


def _merge(
    scenario: SynthScenario,
    per_channel: dict[int, list[np.ndarray]],
    channel_count: int,
    kind: str,
) -> TagStream:
    times_all = []
    chans_all = []
    for ch in range(channel_count):
        parts = per_channel.get(ch, [])
        t = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        t = np.sort(t)
        if scenario.dead_time_ps > 0:
            t = _apply_dead_time(
                t, int(round(scenario.dead_time_ps / scenario.resolution_ps))
            )
        times_all.append(t)
        chans_all.append(np.full(t.size, ch, dtype=np.uint16))
    times = np.concatenate(times_all)
    chans = np.concatenate(chans_all)
    order = np.lexsort((chans, times))
    return TagStream(
        resolution_ps=scenario.resolution_ps,
        timestamps=times[order].astype(np.uint64),
        channels=chans[order],
        channel_count=channel_count,
        metadata={
            "duration_s": scenario.duration,
            "seed": scenario.seed,
            "scenario_digest": scenario.digest(),
            "kind": kind,
        },
    )


def _map_rings(scenario: SynthScenario, worker, threads: int) -> list:
    n = len(scenario.array.resonators)
    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, range(n)))
    return [worker(i) for i in range(n)]


def synthesize(scenario: SynthScenario, threads: int = 1) -> TagStream:
    """Two-channel stream (0 = signal, 1 = idler) from plain pair emission.

    Per ring, three detected-event categories are drawn (both photons,
    signal only, idler only) at the thinned rates R*eta_s*eta_i,
    R*eta_s*(1-eta_i), R*(1-eta_s)*eta_i; both-photon events share an
    emission time and get independent per-arm jitter.
    """
    arr = scenario.array
    sigma = _arm_sigma_ticks(scenario)
    n_ticks = scenario.duration_ticks
    eta_s = arr.channel_efficiency_signal
    eta_i = arr.channel_efficiency_idler

    def worker(ring: int):
        rate = pair_rate(arr.resonators[ring], scenario.pump_power_per_ring[ring])
        rng = _rng(scenario.seed, _PAIRS, ring)
        t_both = _uniform_times(rng, rate * eta_s * eta_i, scenario)
        sig = [_jitter(rng, t_both, sigma)]
        idl = [_jitter(rng, t_both, sigma)]
        sig.append(_jitter(rng, _uniform_times(rng, rate * eta_s * (1 - eta_i), scenario), sigma))
        idl.append(_jitter(rng, _uniform_times(rng, rate * (1 - eta_s) * eta_i, scenario), sigma))
        return (
            _clip_window(np.concatenate(sig), n_ticks),
            _clip_window(np.concatenate(idl), n_ticks),
        )

    results = _map_rings(scenario, worker, threads)
    per_channel = {
        CH_SIGNAL: [r[0] for r in results],
        CH_IDLER: [r[1] for r in results],
    }
    per_channel[CH_SIGNAL].append(_dark_times(scenario, CH_SIGNAL, arr.dark_rate_signal))
    per_channel[CH_IDLER].append(_dark_times(scenario, CH_IDLER, arr.dark_rate_idler))
    return _merge(scenario, per_channel, 2, "pairs")


def synthesize_franson(scenario: SynthScenario, threads: int = 1) -> TagStream:
    """Two-channel stream through the folded unbalanced interferometer.

    Each pair picks one of the four path combinations (SS, SL, LS, LL) with
    equal probability. Different-path combinations survive with the
    interferometer throughput k and land on the side peaks at -/+ delay
    (LS / SL, delay counted as idler minus signal time). Same-path
    combinations produce the phase-sensitive central coincidence with
    probability k*(1 + V cos phi)/2 and otherwise degrade into single-photon
    or loss outcomes balanced so each photon's marginal survival stays
    exactly k: singles rates are phase-independent while central-peak
    coincidences fringe as (1 + V cos phi)/2. At full visibility and phi = 0
    the central:side:side areas come out 2:1:1.
    """
    if scenario.franson is None:
        raise ValueError("scenario.franson settings are required")
    fr = scenario.franson
    delay_ticks = int(round(fr.delay_ns * 1000.0 / scenario.resolution_ps))
    if delay_ticks < 5 * scenario.jitter_fwhm / scenario.resolution_ps:
        raise ValueError(
            f"interferometer delay {fr.delay_ns} ns must exceed 5x the "
            f"{scenario.jitter_fwhm} ps coincidence jitter"
        )
    arr = scenario.array
    sigma = _arm_sigma_ticks(scenario)
    n_ticks = scenario.duration_ticks
    eta_s = arr.channel_efficiency_signal
    eta_i = arr.channel_efficiency_idler
    k = fr.throughput
    p_c = 0.5 * (1.0 + fr.visibility * np.cos(fr.phase))

    def worker(ring: int):
        rate = pair_rate(arr.resonators[ring], scenario.pump_power_per_ring[ring])
        rng = _rng(scenario.seed, _FRANSON, ring)
        sig = []
        idl = []
        # coincidence categories: central SS, central LL, side SL, side LS
        coinc = (
            (0.25 * k * p_c, 0, 0),
            (0.25 * k * p_c, delay_ticks, delay_ticks),
            (0.25 * k, 0, delay_ticks),
            (0.25 * k, delay_ticks, 0),
        )
        for frac, d_s, d_i in coinc:
            t0 = _uniform_times(rng, rate * frac * eta_s * eta_i, scenario)
            sig.append(_jitter(rng, t0 + d_s, sigma))
            idl.append(_jitter(rng, t0 + d_i, sigma))
        # orphan singles: marginal survival k per photon minus the photons
        # already accounted for in the coincidence categories
        s_orphan = rate * (k * eta_s - 0.5 * k * (p_c + 1.0) * eta_s * eta_i)
        i_orphan = rate * (k * eta_i - 0.5 * k * (p_c + 1.0) * eta_s * eta_i)
        sig.append(_jitter(rng, _uniform_times(rng, s_orphan, scenario), sigma))
        idl.append(_jitter(rng, _uniform_times(rng, i_orphan, scenario), sigma))
        return (
            _clip_window(np.concatenate(sig), n_ticks),
            _clip_window(np.concatenate(idl), n_ticks),
        )

    results = _map_rings(scenario, worker, threads)
    per_channel = {
        CH_SIGNAL: [r[0] for r in results],
        CH_IDLER: [r[1] for r in results],
    }
    per_channel[CH_SIGNAL].append(_dark_times(scenario, CH_SIGNAL, arr.dark_rate_signal))
    per_channel[CH_IDLER].append(_dark_times(scenario, CH_IDLER, arr.dark_rate_idler))
    return _merge(scenario, per_channel, 2, "franson")


def synthesize_hbt(scenario: SynthScenario, threads: int = 1) -> TagStream:
    """Three-channel stream (0 = herald signal, 1/2 = idler beam-splitter arms).

    Surviving idlers route to arm 1 or 2 with probability 1/2 each. Any
    nonzero three-fold rate at zero delay comes from multi-pair emission
    within the jitter window; no artificial noise term is added.
    """
    arr = scenario.array
    sigma = _arm_sigma_ticks(scenario)
    n_ticks = scenario.duration_ticks
    eta_s = arr.channel_efficiency_signal
    eta_i = arr.channel_efficiency_idler

    def worker(ring: int):
        rate = pair_rate(arr.resonators[ring], scenario.pump_power_per_ring[ring])
        rng = _rng(scenario.seed, _HBT, ring)
        sig = []
        arm1 = []
        arm2 = []
        for arm_list in (arm1, arm2):
            t0 = _uniform_times(rng, rate * eta_s * eta_i / 2.0, scenario)
            sig.append(_jitter(rng, t0, sigma))
            arm_list.append(_jitter(rng, t0, sigma))
        sig.append(_jitter(rng, _uniform_times(rng, rate * eta_s * (1 - eta_i), scenario), sigma))
        arm1.append(_jitter(rng, _uniform_times(rng, rate * (1 - eta_s) * eta_i / 2.0, scenario), sigma))
        arm2.append(_jitter(rng, _uniform_times(rng, rate * (1 - eta_s) * eta_i / 2.0, scenario), sigma))
        return (
            _clip_window(np.concatenate(sig), n_ticks),
            _clip_window(np.concatenate(arm1), n_ticks),
            _clip_window(np.concatenate(arm2), n_ticks),
        )

    results = _map_rings(scenario, worker, threads)
    per_channel = {
        CH_HERALD: [r[0] for r in results],
        CH_IDLER_1: [r[1] for r in results],
        CH_IDLER_2: [r[2] for r in results],
    }
    per_channel[CH_HERALD].append(_dark_times(scenario, CH_HERALD, arr.dark_rate_signal))
    per_channel[CH_IDLER_1].append(_dark_times(scenario, CH_IDLER_1, arr.dark_rate_idler))
    per_channel[CH_IDLER_2].append(_dark_times(scenario, CH_IDLER_2, arr.dark_rate_idler))
    return _merge(scenario, per_channel, 3, "hbt")
