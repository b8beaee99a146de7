"""Physical constants and closed-form models for microring pair sources.

Every downstream module consumes these types: a resonator is described by its
three resonances (pump, signal, idler), loaded quality factor, free spectral
range, thermo-optic detuning, and a pair-generation efficiency in GHz/mW^2.
An array couples up to 20 such rings to one bus waveguide and lumps the
bus-to-detector transmission into one efficiency per channel.

Units convention (used throughout the package):
    optical frequencies   GHz (absolute, ~1.93e5 GHz in the C band)
    linewidths            MHz
    pump power            mW
    rates                 Hz
Storing optical frequencies as 64-bit floats in GHz keeps sub-kHz resolution,
which absolute frequencies in Hz would not.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

MAX_ARRAY_SIZE = 20

# Gaussian FWHM = 2*sqrt(2*ln 2) * sigma
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


@dataclass(frozen=True)
class ResonatorSpec:
    """One microring resonator.

    Parameters
    ----------
    ring_id : int
        Small identifying integer, unique within an array.
    center_freq_pump, center_freq_signal, center_freq_idler : float
        Cold-cavity resonance frequencies [GHz]. Signal and idler must be
        symmetric about the pump to within one linewidth (energy conservation
        of the four-wave-mixing process).
    fsr : float
        Free spectral range [GHz].
    q_loaded : float
        Loaded quality factor (dimensionless).
    linewidth_fwhm : float
        Loaded linewidth [MHz]. Must equal pump frequency / Q.
    detuning : float
        Thermo-optic detuning [GHz], applied equally to all three resonances.
    pairgen_efficiency : float
        Internal pair-generation efficiency [GHz/mW^2].
    """

    ring_id: int
    center_freq_pump: float
    center_freq_signal: float
    center_freq_idler: float
    fsr: float
    q_loaded: float
    linewidth_fwhm: float
    detuning: float = 0.0
    pairgen_efficiency: float = 0.0

    def __post_init__(self) -> None:
        if self.q_loaded <= 0:
            raise ValueError(f"q_loaded must be positive, got {self.q_loaded}")
        if self.fsr <= 0:
            raise ValueError(f"fsr must be positive, got {self.fsr}")
        if self.pairgen_efficiency < 0:
            raise ValueError(
                f"pairgen_efficiency must be >= 0, got {self.pairgen_efficiency}"
            )
        expected_mhz = 1e3 * self.center_freq_pump / self.q_loaded
        if not np.isclose(self.linewidth_fwhm, expected_mhz, rtol=1e-6, atol=0.0):
            raise ValueError(
                f"ring {self.ring_id}: linewidth_fwhm {self.linewidth_fwhm} MHz "
                f"inconsistent with center_freq_pump/q_loaded = {expected_mhz:.6f} MHz"
            )
        asymmetry = abs(
            self.center_freq_signal + self.center_freq_idler - 2.0 * self.center_freq_pump
        )
        if asymmetry > self.linewidth_ghz:
            raise ValueError(
                f"ring {self.ring_id}: signal/idler not symmetric about pump "
                f"(offset {asymmetry:.6f} GHz exceeds one linewidth)"
            )

    @property
    def linewidth_ghz(self) -> float:
        """Loaded linewidth [GHz]."""
        return self.linewidth_fwhm * 1e-3

    @classmethod
    def from_q(
        cls,
        ring_id: int,
        center_freq_pump: float,
        fsr: float,
        q_loaded: float,
        detuning: float = 0.0,
        pairgen_efficiency: float = 0.0,
    ) -> "ResonatorSpec":
        """Build a spec with the linewidth derived from Q and the signal/idler
        resonances placed one FSR above/below the pump."""
        return cls(
            ring_id=ring_id,
            center_freq_pump=center_freq_pump,
            center_freq_signal=center_freq_pump + fsr,
            center_freq_idler=center_freq_pump - fsr,
            fsr=fsr,
            q_loaded=q_loaded,
            linewidth_fwhm=1e3 * center_freq_pump / q_loaded,
            detuning=detuning,
            pairgen_efficiency=pairgen_efficiency,
        )


@dataclass(frozen=True)
class ArrayConfig:
    """A bus-coupled resonator array plus the detection chain.

    channel_efficiency_signal/idler are the *total* bus-waveguide-to-detector
    transmissions, detector efficiency included. bus_loss_db records the
    per-facet coupling loss for provenance; it is not applied on top of the
    channel efficiencies.
    """

    resonators: tuple[ResonatorSpec, ...]
    bus_loss_db: float = 0.0
    channel_efficiency_signal: float = 1.0
    channel_efficiency_idler: float = 1.0
    dark_rate_signal: float = 0.0
    dark_rate_idler: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "resonators", tuple(self.resonators))
        if not self.resonators:
            raise ValueError("array must contain at least one resonator")
        if len(self.resonators) > MAX_ARRAY_SIZE:
            raise ValueError(
                f"array supports at most {MAX_ARRAY_SIZE} resonators, "
                f"got {len(self.resonators)}"
            )
        ids = [r.ring_id for r in self.resonators]
        if len(set(ids)) != len(ids):
            raise ValueError(f"resonator ids must be unique, got {ids}")
        for name, eta in (
            ("channel_efficiency_signal", self.channel_efficiency_signal),
            ("channel_efficiency_idler", self.channel_efficiency_idler),
        ):
            if not 0.0 < eta <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {eta}")
        for name, rate in (
            ("dark_rate_signal", self.dark_rate_signal),
            ("dark_rate_idler", self.dark_rate_idler),
        ):
            if rate < 0:
                raise ValueError(f"{name} must be >= 0, got {rate}")


def pair_rate(spec: ResonatorSpec, pump_power_mw: float) -> float:
    """On-chip pair-generation rate [Hz] at the given pump power [mW].

    The rate follows the Kerr-comb quadratic power law, with the prefactor
    (which bundles n2, Q and mode volume) supplied as the ring's configured
    efficiency: R = efficiency[GHz/mW^2] * P[mW]^2 * 1e9.
    """
    if pump_power_mw < 0:
        raise ValueError(f"pump power must be >= 0, got {pump_power_mw} mW")
    return spec.pairgen_efficiency * 1e9 * pump_power_mw**2


def lorentzian_transmission(
    spec: ResonatorSpec, freq_ghz: float | np.ndarray, dip_depth: float = 0.95
) -> float | np.ndarray:
    """All-pass transmission dip of the ring nearest to each frequency.

    T(f) = 1 - d * (G/2)^2 / ((f - f0)^2 + (G/2)^2), with G the loaded
    linewidth and f0 the resonance of the pump-anchored FSR grid (detuning
    included) nearest to f. The dip depth d is a free parameter; the default
    0.95 stands in for an unspecified resonance extinction.
    """
    if not 0.0 <= dip_depth <= 1.0:
        raise ValueError(f"dip_depth must be in [0, 1], got {dip_depth}")
    f = np.asarray(freq_ghz, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("frequency must be finite")
    anchor = spec.center_freq_pump + spec.detuning
    k = np.rint((f - anchor) / spec.fsr)
    f0 = anchor + k * spec.fsr
    hg = 0.5 * spec.linewidth_ghz
    t = 1.0 - dip_depth * hg**2 / ((f - f0) ** 2 + hg**2)
    if np.isscalar(freq_ghz):
        return float(t)
    return t


def build_detuned_array(
    base: ResonatorSpec, n: int, offset_ghz: float, **array_kwargs
) -> ArrayConfig:
    """Array of n copies of `base` with detunings 0, offset, 2*offset, ...

    Ring ids are assigned base.ring_id + m. The total span must stay within
    one FSR: interleaving beyond that wraps the combs back onto each other,
    so it is rejected rather than silently aliased.
    """
    if n < 1:
        raise ValueError(f"array size must be >= 1, got {n}")
    if abs(offset_ghz) * (n - 1) > base.fsr:
        raise ValueError(
            f"total detuning span {abs(offset_ghz) * (n - 1):.3f} GHz exceeds "
            f"one FSR ({base.fsr} GHz)"
        )
    rings = tuple(
        replace(base, ring_id=base.ring_id + m, detuning=m * offset_ghz)
        for m in range(n)
    )
    return ArrayConfig(resonators=rings, **array_kwargs)


def db_to_linear(loss_db: float) -> float:
    """Power transmission factor for a loss given in dB."""
    return 10.0 ** (-loss_db / 10.0)
