"""Command-line pipeline: synthetic data, encoder pretraining, denoiser
training, ensemble forecasting, and evaluation with CSV/PGM/figure
outputs.

Every command is deterministic given (config, seed, input files).  The
environment variable CODICAST_THREADS caps ensemble worker threads
(0 = serial, the default).  Exit codes: 0 ok, 2 config error, 3 data
error, 4 shape/version error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from .config import load_config
from .diffusion import DiffusionConfig, TrainedModel, train
from .encoder import EncoderConfig, PretrainedEncoder, pretrain_autoencoder
from .errors import (EXIT_CONFIG, EXIT_DATA, EXIT_SHAPE, CheckpointError, CodicastError,
                     ConfigError, DataError, ShapeError)
from .forecast import ForecastEnsemble, coverage, ensemble_forecast, uncertainty
from .grid import (GridSeries, fit_norm, load_series, make_synthetic, normalize_series,
                   save_series)
from .metrics import acc, climatology, lat_weights, rmse_weighted
from .report import (MetricsRow, dump_field_pgms, field_figure, skill_figure,
                     spread_figure, write_metrics_csv)
from .seeding import derive_seed
from .serialization import load_encoder, load_model, save_encoder, save_model

_ENCODER_SEED_STREAM = 1


def _workers() -> int:
    raw = os.environ.get("CODICAST_THREADS", "0")
    try:
        return max(0, int(raw))
    except ValueError:
        raise ConfigError(f"CODICAST_THREADS must be an integer, got {raw!r}")


def _write_loss_csv(path: Path, history: list[float]) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(history):
            fh.write(f"{i},{loss!r}\n")


def _parse_dims(text: str) -> tuple[int, int, int, int]:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(f"--dims expects T,H,W,C, got {text!r}")
    try:
        t, h, w, c = (int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--dims expects integers, got {text!r}")
    return t, h, w, c


def cmd_make_synthetic(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    dims = _parse_dims(args.dims) if args.dims else tuple(config.data.dims)
    seed = args.seed if args.seed is not None else config.data.seed
    t, h, w, c = dims
    series = make_synthetic(h, w, c, t, seed,
                            step_hours=config.data.step_hours,
                            perturbation=config.data.perturbation)
    save_series(args.out, series)
    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    print(f"wrote {args.out}: T={t} H={h} W={w} C={c} seed={seed} sha256={digest}")
    return 0


def cmd_pretrain_encoder(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    data = load_series(args.data)
    stats = fit_norm(data)
    normalized = normalize_series(data, stats)
    enc_config = EncoderConfig(
        in_channels=data.shape[-1],
        latent_channels=config.encoder.d_e,
        epochs=config.encoder.epochs,
        batch_size=config.encoder.batch,
        learning_rate=config.encoder.lr,
        seed=derive_seed(config.train.seed, _ENCODER_SEED_STREAM))
    model = pretrain_autoencoder(normalized, enc_config)
    bundle = PretrainedEncoder(model=model, stats=stats, channel_names=data.channel_names)
    save_encoder(args.out, bundle)
    _write_loss_csv(Path(str(args.out) + ".losses.csv"), model.loss_history)
    print(f"wrote {args.out}: d_e={model.latent_channels} epochs={enc_config.epochs} "
          f"final_loss={model.loss_history[-1]:.6g}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if not Path(args.encoder).exists():
        raise DataError(f"encoder checkpoint not found: {args.encoder}")
    encoder = load_encoder(args.encoder)
    data = load_series(args.data)
    diff_config = DiffusionConfig(
        num_steps=config.schedule.N,
        beta_start=config.schedule.beta_start,
        beta_end=config.schedule.beta_end,
        schedule_mode=config.schedule.mode,
        epochs=config.train.epochs,
        batch_size=config.train.batch,
        learning_rate=config.train.lr,
        decay_steps=config.train.decay_steps,
        decay_rate=config.train.decay_rate,
        attn_dim=config.denoiser.d,
        base_width=config.denoiser.base_width,
        seed=config.train.seed)
    model = train(diff_config, data, encoder)
    save_model(args.out, model)
    _write_loss_csv(Path(str(args.out) + ".losses.csv"), model.loss_history)
    print(f"wrote {args.out}: N={config.schedule.N} epochs={config.train.epochs} "
          f"final_loss={model.loss_history[-1]:.6g}")
    return 0


def _write_forecast(out_dir: Path, model: TrainedModel, ensemble: ForecastEnsemble,
                    base_seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    member_files = []
    for i, member in enumerate(ensemble.members):
        name = f"member_{i:03d}.gwf"
        save_series(out_dir / name, GridSeries(member, model.step_hours))
        member_files.append(name)
    bands = uncertainty(ensemble)
    save_series(out_dir / "mean.gwf",
                GridSeries(tuple(b.mean for b in bands), model.step_hours))
    save_series(out_dir / "std.gwf",
                GridSeries(tuple(b.std for b in bands), model.step_hours))
    manifest = {
        "base_seed": base_seed,
        "members": ensemble.num_members,
        "steps": ensemble.num_steps,
        "member_seeds": list(ensemble.member_seeds),
        "lead_hours": list(ensemble.lead_hours),
        "channel_names": list(model.channel_names),
        "files": {"members": member_files, "mean": "mean.gwf", "std": "std.gwf"},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _conditioning_frames(series: GridSeries):
    if len(series) < 2:
        raise DataError(f"initial conditions need at least 2 frames, got {len(series)}")
    return series.frames[-2], series.frames[-1]


def cmd_forecast(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    model = load_model(args.model)
    init = load_series(args.init)
    x_tm1, x_t = _conditioning_frames(init)
    steps = args.steps if args.steps is not None else config.forecast.T
    members = args.members if args.members is not None else config.forecast.M
    seed = args.seed if args.seed is not None else config.train.seed
    ensemble = ensemble_forecast(model, x_tm1, x_t, steps, members, seed,
                                 workers=min(_workers(), members))
    _write_forecast(Path(args.out), model, ensemble, seed)
    print(f"wrote {args.out}: members={members} steps={steps} base_seed={seed}")
    return 0


def _load_forecast_dir(path: Path) -> tuple[ForecastEnsemble, dict]:
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no manifest.json under {path}")
    manifest = json.loads(manifest_path.read_text())
    members = []
    for name in manifest["files"]["members"]:
        series = load_series(path / name)
        members.append(series.frames)
    ensemble = ForecastEnsemble(members=tuple(members),
                                member_seeds=tuple(manifest["member_seeds"]),
                                lead_hours=tuple(manifest["lead_hours"]))
    return ensemble, manifest


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    truth = load_series(args.truth)
    if args.forecast:
        ensemble, _ = _load_forecast_dir(Path(args.forecast))
    else:
        model = load_model(args.model)
        steps = len(truth) - 2
        if steps < 1:
            raise DataError(f"truth series needs at least 3 frames, got {len(truth)}")
        members = args.members if args.members is not None else config.forecast.M
        seed = args.seed if args.seed is not None else config.train.seed
        x_tm1, x_t = truth.frames[0], truth.frames[1]
        ensemble = ensemble_forecast(model, x_tm1, x_t, steps, members, seed,
                                     workers=min(_workers(), members))
    steps = ensemble.num_steps
    if len(truth) < 2 + steps:
        raise DataError(
            f"truth series has {len(truth)} frames, need {2 + steps} to verify {steps} leads")
    truth_frames = truth.frames[2:2 + steps]
    channel_names = truth.channel_names
    weights = lat_weights(truth.frames[0].lat_deg)
    clim = climatology(truth)

    member_vals = ensemble.values()
    mean_traj = member_vals.mean(axis=0)
    std_traj = member_vals.std(axis=0)
    cov1 = coverage(ensemble, truth_frames, 1.0)
    cov2 = coverage(ensemble, truth_frames, 2.0)

    rows = []
    for k in range(steps):
        truth_k = truth_frames[k].values[None]
        rmse_k = rmse_weighted(mean_traj[k][None], truth_k, weights)
        acc_k = acc(mean_traj[k][None], truth_k, clim, weights)
        spread_k = (std_traj[k] * weights.weights[:, None, None]).mean(axis=(0, 1))
        for ci, name in enumerate(channel_names):
            rows.append(MetricsRow(
                channel=name, lead_hours=ensemble.lead_hours[k],
                rmse=float(rmse_k[ci]), acc=float(acc_k[ci]),
                ensemble_spread=float(spread_k[ci]),
                coverage_1sigma=float(cov1[k, ci]), coverage_2sigma=float(cov2[k, ci])))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics.csv", rows)
    if not args.no_figures:
        skill_figure(rows, out_dir / "skill.png")
        spread_figure(rows, out_dir / "spread.png")
        field_figure(truth_frames[0].values, mean_traj[0], channel_names,
                     ensemble.lead_hours[0], out_dir / "fields_lead1.png")
    if args.dump_fields:
        for k in range(steps):
            dump_field_pgms(out_dir, truth_frames[k].values, mean_traj[k],
                            channel_names, ensemble.lead_hours[k])
    print(f"wrote {out_dir / 'metrics.csv'}: {len(rows)} rows "
          f"({len(channel_names)} channels x {steps} leads)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codicast",
        description="Conditional diffusion forecasting for gridded fields")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate a synthetic advection GWF file")
    p.add_argument("--out", required=True)
    p.add_argument("--dims", help="T,H,W,C (default from config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("pretrain-encoder", help="pretrain the condition encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_pretrain_encoder)

    p = sub.add_parser("train", help="train the conditional denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="sample an ensemble forecast")
    p.add_argument("--model", required=True)
    p.add_argument("--init", required=True, help="GWF file; last two frames condition")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int)
    p.add_argument("--members", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="score a forecast against truth")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--forecast", help="directory written by the forecast command")
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--members", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dump-fields", action="store_true",
                   help="write truth/prediction/difference PGM stacks")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ShapeError, CheckpointError) as exc:
        print(f"shape/version error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except CodicastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
