"""Scenario config files.

INI-style structured text with explicit units in the key names:

    [array]
    bus_loss_db = 6.5

    [detectors]
    path_loss_signal_db = 13.5      ; bus-to-detector optical loss
    path_loss_idler_db = 12.5
    efficiency_signal = 0.85        ; detector quantum efficiency
    efficiency_idler = 0.85
    dark_rate_signal_hz = 0.0
    dark_rate_idler_hz = 0.0

    [resonator.1]
    center_pump_ghz = 193000.0
    fsr_ghz = 650.0
    q_loaded = 310000
    detuning_ghz = 0.0
    pairgen_ghz_per_mw2 = 1.01
    ; optional: center_signal_ghz, center_idler_ghz, linewidth_fwhm_mhz

    [pump]
    power_mw = 0.0673               ; scalar, or comma list per ring
    duration_s = 60
    jitter_fwhm_ps = 867
    seed = 1                        ; optional, overridden by --seed

Optional [franson] (delay_ns, phase_rad, visibility, throughput), [mixing]
(mod_freq_ghz, mod_depth_rad, mod_phase_rad, max_order), [hbt] (enabled),
and [detectors] dead_time_ps. Path loss and detector efficiency are kept
separate so either reading of a lumped loss budget is representable; the
channel efficiency used in synthesis is their product.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from qcomb.core_model import ArrayConfig, ResonatorSpec, db_to_linear
from qcomb.eo_comb import ModulatorSettings
from qcomb.event_synth import FransonSettings, SynthScenario


class ConfigError(ValueError):
    """Malformed scenario config; message names the section/key at fault."""


def _get(cp, section, key, conv, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"[{section}] missing required key '{key}'")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def _parse_bool(raw: str) -> bool:
    val = raw.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_power_list(raw: str) -> list[float]:
    return [float(tok) for tok in raw.split(",") if tok.strip()]


def _resonator_from_section(cp, section: str, ring_id: int) -> ResonatorSpec:
    pump = _get(cp, section, "center_pump_ghz", float, required=True)
    fsr = _get(cp, section, "fsr_ghz", float, required=True)
    q = _get(cp, section, "q_loaded", float, required=True)
    detuning = _get(cp, section, "detuning_ghz", float, default=0.0)
    eff = _get(cp, section, "pairgen_ghz_per_mw2", float, default=0.0)
    signal = _get(cp, section, "center_signal_ghz", float, default=pump + fsr)
    idler = _get(cp, section, "center_idler_ghz", float, default=pump - fsr)
    linewidth = _get(
        cp, section, "linewidth_fwhm_mhz", float, default=1e3 * pump / q
    )
    try:
        return ResonatorSpec(
            ring_id=ring_id,
            center_freq_pump=pump,
            center_freq_signal=signal,
            center_freq_idler=idler,
            fsr=fsr,
            q_loaded=q,
            linewidth_fwhm=linewidth,
            detuning=detuning,
            pairgen_efficiency=eff,
        )
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def parse_scenario_text(text: str, seed_override: int | None = None):
    """Parse config text into (SynthScenario, mode).

    mode is "pairs", "franson", or "hbt" depending on the optional sections.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), strict=True)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None

    ring_sections = sorted(
        (s for s in cp.sections() if s.startswith("resonator.")),
        key=lambda s: int(s.split(".", 1)[1]),
    )
    if not ring_sections:
        raise ConfigError("no [resonator.N] sections found")
    rings = [
        _resonator_from_section(cp, s, int(s.split(".", 1)[1])) for s in ring_sections
    ]

    path_loss_s = _get(cp, "detectors", "path_loss_signal_db", float, default=0.0)
    path_loss_i = _get(cp, "detectors", "path_loss_idler_db", float, default=0.0)
    det_eff_s = _get(cp, "detectors", "efficiency_signal", float, default=1.0)
    det_eff_i = _get(cp, "detectors", "efficiency_idler", float, default=1.0)
    try:
        array = ArrayConfig(
            resonators=tuple(rings),
            bus_loss_db=_get(cp, "array", "bus_loss_db", float, default=0.0),
            channel_efficiency_signal=db_to_linear(path_loss_s) * det_eff_s,
            channel_efficiency_idler=db_to_linear(path_loss_i) * det_eff_i,
            dark_rate_signal=_get(cp, "detectors", "dark_rate_signal_hz", float, default=0.0),
            dark_rate_idler=_get(cp, "detectors", "dark_rate_idler_hz", float, default=0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"[array]/[detectors]: {exc}") from None

    powers = _get(cp, "pump", "power_mw", _parse_power_list, required=True)
    if len(powers) == 1:
        powers = powers * len(rings)
    duration = _get(cp, "pump", "duration_s", float, required=True)
    jitter = _get(cp, "pump", "jitter_fwhm_ps", float, default=867.0)
    seed = _get(cp, "pump", "seed", int, default=0)
    if seed_override is not None:
        seed = seed_override
    dead_time = _get(cp, "detectors", "dead_time_ps", float, default=0.0)

    franson = None
    if cp.has_section("franson"):
        try:
            franson = FransonSettings(
                delay_ns=_get(cp, "franson", "delay_ns", float, required=True),
                phase=_get(cp, "franson", "phase_rad", float, default=0.0),
                visibility=_get(cp, "franson", "visibility", float, default=1.0),
                throughput=_get(cp, "franson", "throughput", float, default=0.5),
            )
        except ValueError as exc:
            raise ConfigError(f"[franson]: {exc}") from None

    mixing = None
    if cp.has_section("mixing"):
        try:
            mixing = ModulatorSettings(
                mod_freq=_get(cp, "mixing", "mod_freq_ghz", float, required=True),
                mod_depth=_get(cp, "mixing", "mod_depth_rad", float, required=True),
                mod_phase=_get(cp, "mixing", "mod_phase_rad", float, default=0.0),
                max_order=_get(cp, "mixing", "max_order", int, default=8),
            )
        except ValueError as exc:
            raise ConfigError(f"[mixing]: {exc}") from None

    hbt = cp.has_section("hbt") and _get(cp, "hbt", "enabled", _parse_bool, default=True)
    if hbt and franson is not None:
        raise ConfigError("[hbt] and [franson] are mutually exclusive")
    mode = "hbt" if hbt else ("franson" if franson is not None else "pairs")

    try:
        scenario = SynthScenario(
            array=array,
            pump_power_per_ring=tuple(powers),
            duration=duration,
            jitter_fwhm=jitter,
            seed=seed,
            franson=franson,
            mixing=mixing,
            dead_time_ps=dead_time,
        )
    except (ValueError, OverflowError) as exc:
        raise ConfigError(f"[pump]: {exc}") from None
    return scenario, mode


def load_scenario(path, seed_override: int | None = None):
    """Read and parse a scenario config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_scenario_text(text, seed_override=seed_override)
