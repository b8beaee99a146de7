"""Command-line front end: reproducible simulate/analyze runs.

Every command writes machine-first reports (CSV/JSON) plus a run manifest
(<out>.manifest.json) recording the command, config digest, seed, tool
version, input/output digests, and wall time. All randomness flows from a
single --seed; if the flag is absent a seed is drawn and recorded in the
manifest, so any run can be reproduced byte-identically from its manifest.

Exit codes: 0 success, 2 usage, 3 data error, 4 non-convergence.
Set QCOMB_LOG=DEBUG|INFO|WARNING for logging verbosity.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import secrets
import sys
import time
from pathlib import Path

import numpy as np

import qcomb
from qcomb.coincidence import (
    CoincidenceHistogram,
    FitFailure,
    fit_gaussian,
    histogram,
    metrics,
    window_sweep,
)
from qcomb.config import ConfigError, load_scenario
from qcomb.entanglement import fit_visibility, franson_analyze, g2_heralded
from qcomb.event_synth import SynthScenario, synthesize, synthesize_franson, synthesize_hbt
from qcomb.freqbin import FilterBank, jsi_scan, mixing_fringe, two_ring_state
from qcomb.tags import TagFileError, read_qtag, write_qtag
from qcomb.tomography import (
    BELL_PHI_PLUS,
    ProjectionSetting,
    TomographyConvergenceError,
    background_correct,
    fidelity,
    mle_reconstruct,
)

log = logging.getLogger("qcomb")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NONCONVERGENCE = 4


class DataError(Exception):
    pass


class NonConvergence(Exception):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path, command, args, seed, inputs, outputs, t_start) -> None:
    manifest = {
        "command": command,
        "argv": list(args),
        "tool_version": qcomb.__version__,
        "seed": seed,
        "config_digest": _sha256(inputs["config"]) if inputs.get("config") else None,
        "inputs": {
            str(k): _sha256(v) for k, v in inputs.items() if v and Path(v).exists()
        },
        "outputs": {str(p): _sha256(p) for p in outputs if Path(p).exists()},
        "wall_time_s": round(time.monotonic() - t_start, 6),
    }
    path = str(out_path) + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _dump_json(payload: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbits(32)
    log.info("no --seed given; drew %d (recorded in manifest)", seed)
    return seed


def _load_stream(path):
    p = Path(path)
    if not p.exists():
        raise DataError(f"input file not found: {path}")
    return read_qtag(p)


def _require_fit(hist):
    fit = fit_gaussian(hist)
    if isinstance(fit, FitFailure):
        raise NonConvergence(f"gaussian peak fit failed: {fit.reason}")
    return fit


def _synthesize_mode(scenario: SynthScenario, mode: str, threads: int):
    if mode == "franson":
        return synthesize_franson(scenario, threads=threads)
    if mode == "hbt":
        return synthesize_hbt(scenario, threads=threads)
    return synthesize(scenario, threads=threads)


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    t0 = time.monotonic()
    seed = _resolve_seed(args)
    scenario, mode = load_scenario(args.config, seed_override=seed)
    stream = _synthesize_mode(scenario, mode, args.threads)
    write_qtag(stream, args.out)
    log.info("wrote %d records (%s mode) to %s", len(stream), mode, args.out)
    _write_manifest(
        args.out, "simulate", sys.argv[1:], seed, {"config": args.config}, [args.out], t0
    )
    return EXIT_OK


def cmd_coincidence(args) -> int:
    t0 = time.monotonic()
    inputs = {"in": args.infile}
    eta_s = eta_i = 1.0
    if args.config:
        scenario, _ = load_scenario(args.config)
        eta_s = scenario.array.channel_efficiency_signal
        eta_i = scenario.array.channel_efficiency_idler
        inputs["config"] = args.config

    if str(args.infile).endswith(".csv"):
        if args.integration_s is None:
            raise DataError("histogram CSV input needs --integration-s")
        hist = CoincidenceHistogram.from_csv(args.infile, args.integration_s)
    else:
        stream = _load_stream(args.infile)
        hist = histogram(stream, 0, 1, args.bin_ps, args.span_ps)
    fit = _require_fit(hist)
    window = args.window_ps if args.window_ps else fit.fwhm
    result = metrics(hist, fit, window, eta_signal=eta_s, eta_idler=eta_i)

    outputs = [args.out]
    report = result.to_dict()
    report["fit"] = {
        "amplitude": fit.amplitude,
        "mean_ps": fit.mean,
        "sigma_ps": fit.sigma,
        "fwhm_ps": fit.fwhm,
        "baseline": fit.baseline,
    }
    if args.sweep_windows:
        rows = window_sweep(
            hist,
            fit,
            sorted(float(w) for w in args.sweep_windows.split(",")),
            eta_signal=eta_s,
            eta_idler=eta_i,
        )
        report["window_sweep"] = [m.to_dict() for m in rows]
    if args.fmt == "csv":
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            keys = sorted(result.to_dict())
            writer.writerow(keys)
            writer.writerow([result.to_dict()[k] for k in keys])
    else:
        _dump_json(report, args.out)
    if args.hist_out:
        hist.to_csv(args.hist_out)
        outputs.append(args.hist_out)
    _write_manifest(
        args.out, "coincidence", sys.argv[1:], args.seed, inputs, outputs, t0
    )
    return EXIT_OK


def _phase_list(raw: str) -> list[float]:
    try:
        return [float(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise DataError(f"bad --phases list: {exc}") from None


def cmd_franson(args) -> int:
    t0 = time.monotonic()
    seed = _resolve_seed(args)
    scenario, mode = load_scenario(args.config, seed_override=seed)
    if scenario.franson is None:
        raise DataError("config has no [franson] section")
    phases = _phase_list(args.phases)
    if len(phases) < 5:
        raise DataError("need at least 5 phase points")

    import dataclasses

    streams = []
    for j, phase in enumerate(phases):
        sub_seed = int(
            np.random.SeedSequence(seed, spawn_key=(11, j)).generate_state(1)[0]
        )
        sub = dataclasses.replace(
            scenario,
            seed=sub_seed,
            franson=dataclasses.replace(scenario.franson, phase=phase),
        )
        streams.append((phase, synthesize_franson(sub, threads=args.threads)))

    scan = franson_analyze(
        streams, scenario.franson.delay_ns, args.window_ps, bin_width_ps=args.bin_ps
    )
    vis = fit_visibility(scan)
    report = vis.to_dict()
    report["side_peak_pvalue"] = scan.side_pvalue
    report["accidental_floor"] = scan.accidental_floor
    report["per_phase"] = [
        {
            "phase_rad": float(p),
            "central_counts": int(c),
            "singles_signal_hz": float(ss),
            "singles_idler_hz": float(si),
        }
        for p, c, ss, si in zip(
            scan.phases, scan.central_counts, scan.singles_signal_hz, scan.singles_idler_hz
        )
    ]
    _dump_json(report, args.out)
    _write_manifest(
        args.out, "franson", sys.argv[1:], seed, {"config": args.config}, [args.out], t0
    )
    return EXIT_OK


def cmd_g2h(args) -> int:
    t0 = time.monotonic()
    stream = _load_stream(args.infile)
    taus = np.arange(-args.tau_max_ps, args.tau_max_ps + 1, args.tau_step_ps)
    curve = g2_heralded(stream, args.window_ps, taus)
    curve.to_csv(args.out)
    outputs = [args.out]
    if args.summary:
        center = int(np.argmin(np.abs(curve.tau_ps)))
        tail = np.abs(curve.tau_ps) >= 0.8 * args.tau_max_ps
        payload = {
            "g2_zero": None if curve.flagged[center] else float(curve.g2[center]),
            "g2_zero_sigma": float(curve.sigma[center]),
            "g2_tail_mean": float(np.nanmean(curve.g2[tail])),
            "window_ps": args.window_ps,
        }
        _dump_json(payload, args.summary)
        outputs.append(args.summary)
    _write_manifest(
        args.out, "g2h", sys.argv[1:], args.seed, {"in": args.infile}, outputs, t0
    )
    return EXIT_OK


def cmd_jsi(args) -> int:
    t0 = time.monotonic()
    seed = _resolve_seed(args)
    scenario, _ = load_scenario(args.config, seed_override=seed)
    filters = FilterBank(
        centers_ghz=(0.0,),
        bandwidth_ghz=args.filter_bw_ghz,
        extinction_db=args.extinction_db,
    )
    result = jsi_scan(
        scenario, filters, args.window_ps, threads=args.threads
    )
    result.to_csv(args.out)
    meta_path = str(args.out) + ".meta.json"
    _dump_json(result.metadata(), meta_path)
    _write_manifest(
        args.out,
        "jsi",
        sys.argv[1:],
        seed,
        {"config": args.config},
        [args.out, meta_path],
        t0,
    )
    return EXIT_OK


def cmd_freqbin(args) -> int:
    t0 = time.monotonic()
    scenario, _ = load_scenario(args.config)
    if scenario.mixing is None:
        raise DataError("config has no [mixing] section")
    rings = scenario.array.resonators
    if len(rings) < 2:
        raise DataError("frequency-bin state needs two rings in the config")
    state = two_ring_state(
        rings[0],
        rings[1],
        scenario.pump_power_per_ring[0],
        scenario.pump_power_per_ring[1],
    )
    filters = FilterBank(
        centers_ghz=(0.0,),
        bandwidth_ghz=args.filter_bw_ghz or 0.5 * scenario.mixing.mod_freq,
        extinction_db=args.extinction_db,
    )
    phases = np.linspace(0.0, np.pi, args.points)
    probs = mixing_fringe(state, scenario.mixing, phases, filters)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phi_m_rad", "prob"])
        for p, v in zip(phases, probs):
            writer.writerow([f"{p:.10f}", f"{v:.12e}"])
    _write_manifest(
        args.out, "freqbin", sys.argv[1:], args.seed, {"config": args.config}, [args.out], t0
    )
    return EXIT_OK


def cmd_tomo(args) -> int:
    t0 = time.monotonic()
    path = Path(args.infile)
    if not path.exists():
        raise DataError(f"input file not found: {args.infile}")
    settings = []
    accidentals = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                settings.append(
                    ProjectionSetting(
                        basis_s=row["basis_s"].strip(),
                        basis_i=row["basis_i"].strip(),
                        theta_s=float(row["theta_s"]),
                        theta_i=float(row["theta_i"]),
                        counts=float(row["counts"]),
                        duration_s=float(row.get("duration_s", 60.0)),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"{args.infile}: bad row {row}: {exc}") from None
            accidentals.append(float(row.get("accidentals", 0.0) or 0.0))

    try:
        result = mle_reconstruct(settings, restarts=args.restarts, seed=args.seed or 0)
    except TomographyConvergenceError as exc:
        raise NonConvergence(str(exc)) from None
    fid = fidelity(result.rho, BELL_PHI_PLUS)

    fid_corr = fid
    clamped = []
    if any(a > 0 for a in accidentals):
        corrected, clamped = background_correct(settings, accidentals)
        try:
            result_corr = mle_reconstruct(
                corrected, restarts=args.restarts, seed=args.seed or 0
            )
        except TomographyConvergenceError as exc:
            raise NonConvergence(str(exc)) from None
        fid_corr = fidelity(result_corr.rho, BELL_PHI_PLUS)

    report = {
        "rho_re": [[float(v) for v in row] for row in result.rho.matrix.real],
        "rho_im": [[float(v) for v in row] for row in result.rho.matrix.imag],
        "fidelity_phi_plus": fid,
        "fidelity_phi_plus_corrected": fid_corr,
        "n_scale": result.n_scale,
        "likelihood": result.likelihood,
        "seed_likelihood": result.seed_likelihood,
        "restarts_converged": result.restarts_converged,
        "clamped_settings": clamped,
    }
    _dump_json(report, args.out)
    _write_manifest(
        args.out, "tomo", sys.argv[1:], args.seed, {"in": args.infile}, [args.out], t0
    )
    return EXIT_OK


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def cmd_sweep(args) -> int:
    t0 = time.monotonic()
    seed = _resolve_seed(args)
    scenario, _ = load_scenario(args.config, seed_override=seed)
    powers_uw = [float(p) for p in args.powers_uw.split(",") if p.strip()]
    if len(powers_uw) < 3:
        raise DataError("need at least 3 power points")
    durations = None
    if args.durations_s:
        durations = [float(d) for d in args.durations_s.split(",") if d.strip()]
        if len(durations) != len(powers_uw):
            raise DataError("--durations-s must match --powers-uw in length")

    import dataclasses

    rows = []
    for j, p_uw in enumerate(powers_uw):
        sub_seed = int(
            np.random.SeedSequence(seed, spawn_key=(13, j)).generate_state(1)[0]
        )
        sub = dataclasses.replace(
            scenario,
            seed=sub_seed,
            pump_power_per_ring=tuple(
                p_uw * 1e-3 for _ in scenario.pump_power_per_ring
            ),
            duration=durations[j] if durations else scenario.duration,
        )
        stream = synthesize(sub, threads=args.threads)
        hist = histogram(stream, 0, 1, args.bin_ps, args.span_ps)
        fit = _require_fit(hist)
        window = args.window_ps if args.window_ps else fit.fwhm
        m = metrics(
            hist,
            fit,
            window,
            eta_signal=scenario.array.channel_efficiency_signal,
            eta_idler=scenario.array.channel_efficiency_idler,
        )
        counts = stream.counts_per_channel()
        rows.append(
            {
                "power_uw": p_uw,
                "duration_s": sub.duration,
                "singles_signal_hz": counts[0] / sub.duration,
                "singles_idler_hz": counts[1] / sub.duration,
                "n_cc": m.n_cc,
                "n_acc": m.n_acc,
                "car": m.car,
                "car_sigma": m.car_sigma,
                "r_onchip_hz": m.r_onchip_hz,
            }
        )

    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in row.items()}
            )

    outputs = [args.out]
    if args.summary:
        p = np.array([r["power_uw"] for r in rows])
        cc_rate = np.array([r["n_cc"] / r["duration_s"] for r in rows])
        acc_rate = np.array([r["n_acc"] / r["duration_s"] for r in rows])
        n_cc = np.array([r["n_cc"] for r in rows])
        n_acc = np.array([r["n_acc"] for r in rows])
        cc_ok = n_cc >= 10
        acc_ok = n_acc >= 25
        summary = {
            "exponent_coincidences": _loglog_slope(p[cc_ok], cc_rate[cc_ok]),
            "exponent_accidentals": (
                _loglog_slope(p[acc_ok], acc_rate[acc_ok]) if acc_ok.sum() >= 3 else None
            ),
            "points_used_accidentals": int(acc_ok.sum()),
        }
        car = np.array([r["car"] for r in rows])
        rate = np.array([r["r_onchip_hz"] for r in rows])
        car_ok = acc_ok & (car > 0)
        summary["car_vs_rate_slope"] = (
            _loglog_slope(rate[car_ok], car[car_ok]) if car_ok.sum() >= 3 else None
        )
        _dump_json(summary, args.summary)
        outputs.append(args.summary)
    _write_manifest(
        args.out, "sweep", sys.argv[1:], seed, {"config": args.config}, outputs, t0
    )
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcomb",
        description="Microresonator-array photon-pair simulation and analysis",
    )
    parser.add_argument("--version", action="version", version=qcomb.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        if needs_out:
            p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="synthesize a time-tag file from a config")
    p.add_argument("--config", required=True)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coincidence", help="histogram + CAR metrics")
    p.add_argument("--in", dest="infile", required=True, help="QTAG file or histogram CSV")
    p.add_argument("--config", default=None)
    p.add_argument("--bin-ps", type=int, default=100)
    p.add_argument("--span-ps", type=int, default=30_000)
    p.add_argument("--window-ps", type=float, default=None, help="default: fitted FWHM")
    p.add_argument("--integration-s", type=float, default=None)
    p.add_argument("--hist-out", default=None)
    p.add_argument("--sweep-windows", default=None, help="comma list of windows [ps]")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="json")
    common(p)
    p.set_defaults(func=cmd_coincidence)

    p = sub.add_parser("franson", help="time-bin fringe scan and visibility")
    p.add_argument("--config", required=True)
    p.add_argument("--phases", required=True, help="comma list of phases [rad]")
    p.add_argument("--window-ps", type=float, default=2000.0)
    p.add_argument("--bin-ps", type=int, default=100)
    common(p)
    p.set_defaults(func=cmd_franson)

    p = sub.add_parser("g2h", help="heralded g2 from a 3-channel stream")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--window-ps", type=float, default=2000.0)
    p.add_argument("--tau-max-ps", type=int, default=100_000)
    p.add_argument("--tau-step-ps", type=int, default=5_000)
    p.add_argument("--summary", default=None)
    common(p)
    p.set_defaults(func=cmd_g2h)

    p = sub.add_parser("jsi", help="joint spectral intensity scan")
    p.add_argument("--config", required=True)
    p.add_argument("--extinction-db", type=float, default=20.0)
    p.add_argument("--filter-bw-ghz", type=float, default=10.0)
    p.add_argument("--window-ps", type=float, default=2000.0)
    common(p)
    p.set_defaults(func=cmd_jsi)

    p = sub.add_parser("freqbin", help="analytic frequency-bin mixing fringe")
    p.add_argument("--config", required=True)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--extinction-db", type=float, default=np.inf)
    p.add_argument("--filter-bw-ghz", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_freqbin)

    p = sub.add_parser("tomo", help="maximum-likelihood two-qubit tomography")
    p.add_argument("--in", dest="infile", required=True, help="projection counts CSV")
    p.add_argument("--restarts", type=int, default=5)
    common(p)
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("sweep", help="pump-power sweep: singles, rate, CAR")
    p.add_argument("--config", required=True)
    p.add_argument("--powers-uw", required=True, help="comma list of powers [uW]")
    p.add_argument("--durations-s", default=None, help="per-point integration times")
    p.add_argument("--bin-ps", type=int, default=100)
    p.add_argument("--span-ps", type=int, default=30_000)
    p.add_argument("--window-ps", type=float, default=None)
    p.add_argument("--summary", default=None)
    common(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("QCOMB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, TagFileError, DataError) as exc:
        log.error("%s", exc)
        print(f"qcomb: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonConvergence as exc:
        log.error("%s", exc)
        print(f"qcomb: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ValueError, OverflowError) as exc:
        log.error("%s", exc)
        print(f"qcomb: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
