"""Monte-Carlo positioning sweeps over SNR and their CSV emission.

Reproducibility scheme: the per-trial seed derives from
``SeedSequence(entropy=(master_seed, snr_index, trial_index))`` (PCG64
streams) and drives the noise draws; the scenario (target position and
per-anchor channel realizations) derives from
``SeedSequence(entropy=(master_seed, trial_index))`` so every SNR point of a
sweep reuses the same scenarios and the error-vs-SNR curves are paired
comparisons rather than scenario lotteries. Sub-streams are spawned inside
the trial in a fixed order. Two sweeps with the same master seed therefore
produce byte-identical CSV files, serial or parallel.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import SPEED_OF_LIGHT, ChannelProfile, material_response, propagate, sample_cir
from .positioning import (
    Anchor,
    NoValidFixError,
    DegenerateGeometryError,
    NoRealSolutionError,
    PositionFix,
    RoomBounds,
    bancroft_solve,
    position_error,
    select_solution,
)
from .pulses import PulseSet, load_pulse_set
from .ranging import BurstSpec, make_burst, range_from_toa, toa_dirty_template
from .waveform import Waveform, add_awgn

__all__ = [
    "ConfigError",
    "SimConfig",
    "TrialResult",
    "SweepRow",
    "SweepResult",
    "default_anchors",
    "trial_seed",
    "run_trial",
    "sweep_snr",
    "emit_csv",
    "config_from_json",
    "config_to_json",
    "load_default_pulse_set",
]


class ConfigError(ValueError):
    """A configuration file or value is invalid."""


def default_anchors() -> tuple[Anchor, ...]:
    """Four reference nodes in the upper corners of the 6 x 6 x 3 m room."""
    return (
        Anchor("a0", (0.0, 0.0, 3.0)),
        Anchor("a1", (6.0, 0.0, 3.0)),
        Anchor("a2", (0.0, 6.0, 3.0)),
        Anchor("a3", (6.0, 6.0, 3.0)),
    )


@dataclass(frozen=True)
class SimConfig:
    room: RoomBounds = field(default_factory=lambda: RoomBounds((0.0, 0.0, 0.0), (6.0, 6.0, 3.0)))
    anchors: tuple[Anchor, ...] = field(default_factory=default_anchors)
    pulse_set: str | None = None  # path to a pulse-set JSON; None = packaged default
    channel: ChannelProfile = field(default_factory=ChannelProfile)
    symbol_duration: float = 50e-9
    symbol_count: int = 20
    snr_grid_db: tuple[float, ...] = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    trials: int = 100
    master_seed: int = 12345
    out_dir: str = "out"
    floor_only: bool = True
    placement_inset: float = 0.1
    orthogonal_assignment: bool = True
    refine_toa: bool = True
    # synchronized system: a fix whose fitted clock bias exceeds this is the
    # signature of ill-conditioned geometry and is rejected as a failure
    bias_gate_m: float = 0.3
    # candidates this far past a wall still count (floor targets jitter below z=0)
    bounds_tolerance_m: float = 0.25

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_grid_db:
            raise ConfigError("snr grid must be non-empty")
        if len(self.anchors) < 4:
            raise ConfigError("need at least 4 anchors")
        if self.symbol_count < 2:
            raise ConfigError("symbol_count must be >= 2")
        if self.symbol_duration <= 0 or self.placement_inset < 0:
            raise ConfigError("symbol_duration must be positive and inset non-negative")


@dataclass(frozen=True)
class TrialResult:
    trial_id: int
    snr_db: float
    truth: tuple[float, float, float]
    toa_s: tuple[float, ...]
    range_m: tuple[float, ...]
    toa_err_s: tuple[float, ...]
    range_err_m: tuple[float, ...]
    fix: PositionFix | None
    failure: str | None
    position_error_m: float | None


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    toa_nmse: float
    range_nmse: float
    mean_position_error_m: float
    position_nmse: float
    fix_failure_rate: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    trials: dict[float, tuple[TrialResult, ...]]


def load_default_pulse_set() -> PulseSet:
    """The pulse set shipped with the package (regenerable via the CLI)."""
    data = resources.files("uwbloc").joinpath("data/default_pulse_set.json").read_text()
    return load_pulse_set(json.loads(data))


def _resolve_pulses(cfg: SimConfig, pulse_set: PulseSet | None) -> PulseSet:
    if pulse_set is not None:
        return pulse_set
    if cfg.pulse_set is not None:
        return load_pulse_set(cfg.pulse_set)
    return load_default_pulse_set()


def trial_seed(master_seed: int, snr_index: int, trial_index: int) -> int:
    """Documented splitting scheme; distinct per (master, snr, trial)."""
    ss = np.random.SeedSequence(entropy=(master_seed, snr_index, trial_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def scenario_seed(master_seed: int, trial_index: int) -> int:
    """Seed of the SNR-independent part of a trial (target and channels)."""
    ss = np.random.SeedSequence(entropy=(master_seed, trial_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trial(
    cfg: SimConfig,
    snr_db: float,
    seed: int,
    pulse_set: PulseSet | None = None,
    trial_id: int = 0,
    scenario: int | None = None,
) -> TrialResult:
    """Place a target, range it from every anchor, and solve for position.

    ``seed`` drives the noise; ``scenario`` (defaulting to ``seed``) drives
    the target draw and the channel realizations, so a sweep can hold the
    scenario fixed while varying SNR. Solver failures (degenerate geometry,
    no real root, all candidates rejected) are recorded in the result rather
    than raised. Fully deterministic for fixed (cfg, snr_db, seed, scenario).
    """
    ps = _resolve_pulses(cfg, pulse_set)
    scen_streams = np.random.SeedSequence(
        seed if scenario is None else scenario).spawn(1 + len(cfg.anchors))
    noise_streams = np.random.SeedSequence(seed).spawn(len(cfg.anchors))
    truth_rng = np.random.default_rng(scen_streams[0])

    lo = np.asarray(cfg.room.minimum) + cfg.placement_inset
    hi = np.asarray(cfg.room.maximum) - cfg.placement_inset
    x = truth_rng.uniform(lo[0], hi[0])
    y = truth_rng.uniform(lo[1], hi[1])
    z = cfg.room.minimum[2] if cfg.floor_only else truth_rng.uniform(lo[2], hi[2])
    truth = (float(x), float(y), float(z))

    free_space = material_response("free_space", 0.0, 0.5 / ps.dt)
    n_sym = round(cfg.symbol_duration / ps.dt)
    min_len = (cfg.symbol_count + 1) * n_sym

    toas, ranges, toa_errs, range_errs = [], [], [], []
    for idx, anchor in enumerate(cfg.anchors):
        pulse = ps.pulses[idx % ps.pulse_count] if cfg.orthogonal_assignment else ps.pulses[0]
        burst = make_burst(BurstSpec(pulse, cfg.symbol_duration, cfg.symbol_count))
        dist = float(np.linalg.norm(np.asarray(truth) - np.asarray(anchor.position)))
        cir_seed = int(scen_streams[1 + idx].generate_state(1, dtype=np.uint64)[0])
        noise_seed = int(noise_streams[idx].generate_state(1, dtype=np.uint64)[0])
        cir = sample_cir(cfg.channel, cir_seed)
        rx = propagate(burst, dist, cir, free_space)
        if rx.samples.size < min_len:
            rx = Waveform(
                np.concatenate([rx.samples, np.zeros(min_len - rx.samples.size)]),
                rx.dt, rx.t0)
        rx = add_awgn(rx, snr_db, noise_seed)
        est = toa_dirty_template(
            rx, cfg.symbol_duration, cfg.symbol_count,
            template=pulse, refine=cfg.refine_toa)
        rng_m = range_from_toa(est, emit_epoch=0.0)
        true_flight = dist / SPEED_OF_LIGHT
        toas.append(est.toa)
        ranges.append(rng_m)
        toa_errs.append(est.toa - true_flight)
        range_errs.append(rng_m - dist)

    fix: PositionFix | None = None
    failure: str | None = None
    pos_err: float | None = None
    try:
        candidates = bancroft_solve(list(cfg.anchors), ranges)
        fix = select_solution(candidates, cfg.room, tolerance=cfg.bounds_tolerance_m)
        if abs(fix.clock_bias) > cfg.bias_gate_m:
            raise NoValidFixError(
                f"clock bias {fix.clock_bias:.3f} m exceeds the {cfg.bias_gate_m} m "
                f"sanity gate for a synchronized system")
        pos_err = position_error(fix, truth)
    except (DegenerateGeometryError, NoRealSolutionError, NoValidFixError, ValueError) as exc:
        failure = f"{type(exc).__name__}: {exc}"
        fix = None

    return TrialResult(
        trial_id=trial_id,
        snr_db=snr_db,
        truth=truth,
        toa_s=tuple(toas),
        range_m=tuple(ranges),
        toa_err_s=tuple(toa_errs),
        range_err_m=tuple(range_errs),
        fix=fix,
        failure=failure,
        position_error_m=pos_err,
    )


def sweep_snr(cfg: SimConfig, pulse_set: PulseSet | None = None) -> SweepResult:
    """Run trials at every SNR point and aggregate the error statistics.

    Rows are ordered by ascending SNR. range NMSE is normalized by
    (c * symbol_duration)^2 and position NMSE by the room diagonal squared.
    Failed fixes are excluded from position means and surfaced via
    fix_failure_rate.
    """
    ps = _resolve_pulses(cfg, pulse_set)
    diag2 = float(np.sum((np.asarray(cfg.room.maximum) - np.asarray(cfg.room.minimum)) ** 2))
    tsym2 = cfg.symbol_duration**2
    rows = []
    all_trials: dict[float, tuple[TrialResult, ...]] = {}
    for si, snr in enumerate(sorted(cfg.snr_grid_db)):
        results = [
            run_trial(
                cfg, snr, trial_seed(cfg.master_seed, si, ti), ps, trial_id=ti,
                scenario=scenario_seed(cfg.master_seed, ti),
            )
            for ti in range(cfg.trials)
        ]
        toa_sq = [e**2 for r in results for e in r.toa_err_s]
        rng_sq = [e**2 for r in results for e in r.range_err_m]
        pos_errs = [r.position_error_m for r in results if r.position_error_m is not None]
        failures = sum(1 for r in results if r.failure is not None)
        rows.append(
            SweepRow(
                snr_db=snr,
                toa_nmse=float(np.mean(toa_sq) / tsym2),
                range_nmse=float(np.mean(rng_sq) / (SPEED_OF_LIGHT**2 * tsym2)),
                mean_position_error_m=float(np.mean(pos_errs)) if pos_errs else math.nan,
                position_nmse=float(np.mean(np.square(pos_errs)) / diag2) if pos_errs else math.nan,
                fix_failure_rate=failures / len(results),
            )
        )
        all_trials[snr] = tuple(results)
    return SweepResult(rows=tuple(rows), trials=all_trials)


def emit_csv(table: SweepResult | list[SweepRow] | tuple[SweepRow, ...], path: str | Path) -> None:
    """Write one row per SNR point with >= 9 significant digits."""
    rows = table.rows if isinstance(table, SweepResult) else table
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "snr_db", "toa_nmse", "range_nmse",
                "mean_position_error_m", "position_nmse", "fix_failure_rate",
            ])
            for r in rows:
                writer.writerow([
                    f"{r.snr_db:.9e}", f"{r.toa_nmse:.9e}", f"{r.range_nmse:.9e}",
                    f"{r.mean_position_error_m:.9e}", f"{r.position_nmse:.9e}",
                    f"{r.fix_failure_rate:.9e}",
                ])
    except OSError as exc:
        raise OSError(f"failed writing sweep CSV to {path}: {exc}") from exc


def parse_sweep_csv(path: str | Path) -> list[SweepRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(SweepRow(**{k: float(v) for k, v in rec.items()}))
    return rows


# -- configuration files ------------------------------------------------------

_CHANNEL_KEYS = {f.name for f in fields(ChannelProfile)}
_CONFIG_KEYS = {f.name for f in fields(SimConfig)}


def config_from_json(source: str | Path | dict) -> SimConfig:
    """Build a SimConfig from a JSON object mirroring it field-for-field.

    Unknown keys are rejected so typos fail loudly.
    """
    if isinstance(source, dict):
        obj = source
    else:
        try:
            obj = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {source}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict = {}
    try:
        if "room" in obj:
            kwargs["room"] = RoomBounds(tuple(obj["room"]["min"]), tuple(obj["room"]["max"]))
        if "anchors" in obj:
            kwargs["anchors"] = tuple(
                Anchor(str(a["id"]), (float(a["x"]), float(a["y"]), float(a["z"])))
                for a in obj["anchors"]
            )
        if "channel" in obj:
            bad = set(obj["channel"]) - _CHANNEL_KEYS
            if bad:
                raise ConfigError(f"unknown channel keys: {sorted(bad)}")
            kwargs["channel"] = ChannelProfile(**obj["channel"])
        for key in _CONFIG_KEYS - {"room", "anchors", "channel"}:
            if key in obj:
                val = obj[key]
                kwargs[key] = tuple(val) if isinstance(val, list) else val
        return SimConfig(**kwargs)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def config_to_json(cfg: SimConfig, path: str | Path | None = None) -> dict:
    obj = {
        "room": {"min": list(cfg.room.minimum), "max": list(cfg.room.maximum)},
        "anchors": [
            {"id": a.id, "x": a.position[0], "y": a.position[1], "z": a.position[2]}
            for a in cfg.anchors
        ],
        "pulse_set": cfg.pulse_set,
        "channel": {k: getattr(cfg.channel, k) for k in sorted(_CHANNEL_KEYS)},
        "symbol_duration": cfg.symbol_duration,
        "symbol_count": cfg.symbol_count,
        "snr_grid_db": list(cfg.snr_grid_db),
        "trials": cfg.trials,
        "master_seed": cfg.master_seed,
        "out_dir": cfg.out_dir,
        "floor_only": cfg.floor_only,
        "placement_inset": cfg.placement_inset,
        "orthogonal_assignment": cfg.orthogonal_assignment,
        "refine_toa": cfg.refine_toa,
    }
    if path is not None:
        Path(path).write_text(json.dumps(obj, indent=2))
    return obj
