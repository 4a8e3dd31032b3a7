"""Command-line entry points: design, locate, sweep, detect, cir.

Exit codes: 0 success, 2 configuration error, 3 infeasible pulse
optimization, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .channel import cir_to_csv, sample_cir, signature_from_csv
from .detection import DetectionThresholds, classify, estimate_transfer
from .pulses import DesignConfig, InfeasibleDesignError, design_pulses, pulse_set_to_json
from .simulate import (
    ConfigError,
    SimConfig,
    config_from_json,
    emit_csv,
    run_trial,
    sweep_snr,
    trial_seed,
)
from .spectrum import mask_from_json, mask_to_json, psd
from .waveform import waveform_from_csv, waveform_from_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4

_DESIGN_KEYS = {f.name for f in dataclasses.fields(DesignConfig)}


def _load_sim_config(path: str | None) -> SimConfig:
    return config_from_json(path) if path else SimConfig()


def _load_design_config(path: str | None) -> DesignConfig:
    if not path:
        return DesignConfig()
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    unknown = set(obj) - _DESIGN_KEYS
    if unknown:
        raise ConfigError(f"unknown design config keys: {sorted(unknown)}")
    if "mask" in obj:
        obj["mask"] = mask_from_json(obj["mask"])
    try:
        return DesignConfig(**obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid design config: {exc}") from exc


def _load_waveform(path: str):
    p = Path(path)
    if p.suffix.lower() == ".json":
        return waveform_from_json(p)
    return waveform_from_csv(p)


def _cmd_design(args: argparse.Namespace) -> int:
    cfg = _load_design_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ps = design_pulses(cfg)
    pulse_set_to_json(ps, out / "pulse_set.json")
    mask_to_json(cfg.mask, out / "mask.json")

    with open(out / "pulses.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"pulse_{i}" for i in range(ps.pulse_count)])
        times = ps.pulses[0].times
        for j, t in enumerate(times):
            writer.writerow([f"{t:.9e}"] + [f"{p.samples[j]:.9e}" for p in ps.pulses])

    with open(out / "psd_mask.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["freq_hz"] + [f"psd_{i}_dbm_mhz" for i in range(ps.pulse_count)] + ["mask_dbm_mhz"])
        spectra = [psd(p, cfg.nfft) for p in ps.pulses]
        freq = spectra[0][0]
        limits = cfg.mask.limit_at(freq)
        for j in range(freq.size):
            writer.writerow(
                [f"{freq[j]:.9e}"]
                + [f"{dens[j]:.9e}" for _, dens in spectra]
                + [f"{limits[j]:.9e}"])

    print(json.dumps({
        "pulse_set": str(out / "pulse_set.json"),
        "energy_es": ps.energy_es,
        "effectiveness": ps.effectiveness.tolist(),
        "objective": ps.objective,
    }, indent=2))
    return EXIT_OK


def _cmd_locate(args: argparse.Namespace) -> int:
    cfg = _load_sim_config(args.config)
    snr = args.snr[0] if args.snr else cfg.snr_grid_db[-1]
    seed = args.seed if args.seed is not None else trial_seed(cfg.master_seed, 0, 0)
    res = run_trial(cfg, snr, seed)
    out = {
        "snr_db": res.snr_db,
        "seed": seed,
        "truth": list(res.truth),
        "anchors": [a.id for a in cfg.anchors],
        "toa_s": list(res.toa_s),
        "range_m": list(res.range_m),
        "toa_err_s": list(res.toa_err_s),
        "range_err_m": list(res.range_err_m),
        "fix": None if res.fix is None else {
            "position": list(res.fix.position),
            "clock_bias_m": res.fix.clock_bias,
            "residual_rms_m": res.fix.residual_rms,
            "candidate_index": res.fix.candidate_index,
            "selection_rule": res.fix.selection_rule,
        },
        "failure": res.failure,
        "position_error_m": res.position_error_m,
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_sim_config(args.config)
    updates: dict = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.snr:
        updates["snr_grid_db"] = tuple(args.snr)
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.out is not None:
        updates["out_dir"] = args.out
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = sweep_snr(cfg)
    emit_csv(result, out / "sweep.csv")
    with open(out / "fixes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "snr_db", "x", "y", "z", "bias", "residual", "err_m"])
        for snr in sorted(result.trials):
            for res in result.trials[snr]:
                if res.fix is None:
                    continue
                writer.writerow([
                    res.trial_id, f"{snr:.9e}",
                    f"{res.fix.position[0]:.9e}", f"{res.fix.position[1]:.9e}",
                    f"{res.fix.position[2]:.9e}", f"{res.fix.clock_bias:.9e}",
                    f"{res.fix.residual_rms:.9e}", f"{res.position_error_m:.9e}",
                ])
    for row in result.rows:
        print(f"snr {row.snr_db:5.1f} dB  mean position error "
              f"{row.mean_position_error_m * 100:7.3f} cm  failures {row.fix_failure_rate:.2%}")
    print(f"wrote {out / 'sweep.csv'} and {out / 'fixes.csv'}")
    return EXIT_OK


def _cmd_detect(args: argparse.Namespace) -> int:
    thresholds = DetectionThresholds(
        attenuation_db=args.attenuation_threshold,
        nonlinearity_rad=args.nonlinearity_threshold,
    )
    if args.signature:
        sig = signature_from_csv(args.signature)
    else:
        if not (args.tx and args.rx):
            raise ConfigError("detect needs either --signature or both --tx and --rx")
        tx = _load_waveform(args.tx)
        rx = _load_waveform(args.rx)
        sig = estimate_transfer(tx, rx)
    verdict = classify(sig, thresholds)
    print(json.dumps({
        "label": verdict.label,
        "mean_attenuation_db": verdict.mean_attenuation_db,
        "phase_nonlinearity": verdict.phase_nonlinearity,
        "thresholds": {
            "attenuation_db": verdict.thresholds_used[0],
            "nonlinearity_rad": verdict.thresholds_used[1],
        },
    }, indent=2))
    return EXIT_OK


def _cmd_cir(args: argparse.Namespace) -> int:
    cfg = _load_sim_config(args.config)
    seed = args.seed if args.seed is not None else cfg.master_seed
    cir = sample_cir(cfg.channel, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"cir_seed{seed}.csv"
    cir_to_csv(cir, path)
    print(f"wrote {path} ({len(cir.taps)} taps, delay spread {cir.delay_spread * 1e9:.1f} ns)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwbloc",
        description="UWB pulse design, ranging/positioning simulation, and human detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="optimize an orthogonal mask-compliant pulse set")
    p.add_argument("--config", help="design config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("locate", help="run one positioning trial, print verbose JSON")
    p.add_argument("--config", help="simulation config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--snr", type=float, nargs="+")
    p.set_defaults(func=_cmd_locate)

    p = sub.add_parser("sweep", help="Monte-Carlo SNR sweep, write CSV tables")
    p.add_argument("--config", help="simulation config JSON")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--snr", type=float, nargs="+", help="SNR grid override (dB)")
    p.add_argument("--trials", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("detect", help="classify a medium from tx/rx waveforms or a signature")
    p.add_argument("--tx", help="transmitted waveform (CSV or JSON)")
    p.add_argument("--rx", help="received waveform (CSV or JSON)")
    p.add_argument("--signature", help="signature CSV (freq_hz,attenuation_db,phase_rad)")
    p.add_argument("--attenuation-threshold", type=float, default=30.0)
    p.add_argument("--nonlinearity-threshold", type=float, default=0.3)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("cir", help="dump one channel impulse response as CSV")
    p.add_argument("--config", help="simulation config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_cir)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleDesignError as exc:
        print(f"infeasible design: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
