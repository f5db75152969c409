"""Command-line entry point: ingest, synth, train, score, sweep-pca,
eval, report.

Every command writes a ``manifest.json`` (resolved configuration plus
SHA-256 digests of its inputs) into its output directory so runs can be
reproduced exactly. Exit codes: 0 success, 2 usage error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import sys
from collections import defaultdict
from dataclasses import asdict, replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import (
    DatasetSplit,
    DayLabel,
    Schema,
    load_directory,
    split_dataset,
    write_ingestion_report,
)
from .errors import CheckpointError, NumericError, SolarfaultError, TrainingError
from .metrics import (
    ScoreEntry,
    evaluate,
    nll_day_score,
    read_scores_csv,
    write_scores_csv,
)
from .pca import (
    day_score,
    error_vector,
    fit_error_scaler,
    fit_pca,
    pca_sweep,
    reconstruct_pca,
    save_pca_checkpoint,
    write_sweep_csv,
)
from .preprocess import apply_normalizer, fit_normalizer
from .report import report_system
from .synth import SynthConfig, generate_dataset, write_dataset_csv
from .vae import (
    TrainConfig,
    load_vae_checkpoint,
    normalized_values,
    reconstruct,
    save_vae_checkpoint,
    train,
)

# scaled-down defaults for laptop runs vs the full training recipe
PROFILES = {
    "desk": dict(update_steps=2000, hidden_dim=32, num_layers=2, latent_dim=8,
                 batch_size=16, learning_rate=1e-3, beta=0.01, dropout=0.1,
                 token_length=30),
    "paper": dict(update_steps=40_000, hidden_dim=64, num_layers=4, latent_dim=8,
                  batch_size=64, learning_rate=1e-4, beta=0.01, dropout=0.1,
                  token_length=30),
}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, inputs) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "solarfault",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))


def load_config_file(path, section: str) -> dict:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    parser.read(path)
    merged = {}
    for sec in ("common", section):
        if parser.has_section(sec):
            merged.update(parser.items(sec))
    return merged


def resolve(flag_value, config: dict, key: str, default, cast=None):
    """defaults <- config file <- explicit flag."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return cast(config[key]) if cast else config[key]
    return default


def read_split_file(path) -> DatasetSplit:
    sections: dict[str, set[str]] = {"train": set(), "validation": set(), "test": set()}
    current = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in sections:
                raise SolarfaultError(f"unknown split section {current!r} in {path}")
        elif current is None:
            raise SolarfaultError(f"system id before any section in {path}")
        else:
            sections[current].add(line)
    return DatasetSplit(train=frozenset(sections["train"]),
                        validation=frozenset(sections["validation"]),
                        test=frozenset(sections["test"]))


def load_dataset(data_dir):
    """Load a dataset directory (schema.txt, split.txt, per-system CSVs)."""
    data_dir = Path(data_dir)
    schema_path = data_dir / "schema.txt"
    split_path = data_dir / "split.txt"
    for p in (schema_path, split_path):
        if not p.is_file():
            raise SolarfaultError(
                f"missing {p.name} in {data_dir}; run 'solarfault synth' or "
                f"provide an ingested dataset directory")
    schema = Schema.from_file(schema_path)
    days_by_system, report = load_directory(data_dir, schema)
    split = read_split_file(split_path)
    return schema, days_by_system, split_dataset(days_by_system, split), report


def channel_kinds(schema: Schema) -> dict[str, str]:
    return {c: ("znorm" if c in schema.znorm_channels else "minmax")
            for c in schema.channels}


def score_entries(days, scorer) -> list[ScoreEntry]:
    """One ScoreEntry per day, day_index sequential per system by date."""
    entries = []
    index = defaultdict(int)
    for d in sorted(days, key=lambda d: (d.system_id, d.day)):
        entries.append(ScoreEntry(system_id=d.system_id, date=d.day.isoformat(),
                                  day_index=index[d.system_id], score=scorer(d),
                                  label=d.label))
        index[d.system_id] += 1
    return entries


def vae_scorer(model):
    def scorer(d):
        x = normalized_values(d, model)
        field = reconstruct(d, model, mode="posterior-mean")
        return nll_day_score(x, field.mu, field.var)
    return scorer


def homoscedastic_scorer(model):
    if model.error_scaler is None:
        raise CheckpointError("checkpoint has no embedded error scaler; "
                              "was it trained with --detector vae-homoscedastic?")
    from .pca import apply_scaler

    def scorer(d):
        x = normalized_values(d, model)
        field = reconstruct(d, model, mode="posterior-mean")
        err = error_vector(x, field.mu)
        return float(apply_scaler(err, model.error_scaler).mean())
    return scorer


@click.group()
@click.version_option(version=__version__)
def cli():
    """Fault detection for solar thermal systems via probabilistic
    reconstructions."""


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--train-systems", type=int, default=None)
@click.option("--val-systems", type=int, default=None)
@click.option("--test-systems", type=int, default=None)
@click.option("--days-per-system", type=int, default=None)
@click.option("--prevalence", type=float, default=None)
def synth(out_dir, config_path, seed, train_systems, val_systems, test_systems,
          days_per_system, prevalence):
    """Generate a synthetic dataset in the ingestion CSV format."""
    conf = load_config_file(config_path, "synth")
    cfg = SynthConfig(
        seed=resolve(seed, conf, "seed", 0, int),
        n_train_systems=resolve(train_systems, conf, "train_systems", 10, int),
        n_val_systems=resolve(val_systems, conf, "val_systems", 5, int),
        n_test_systems=resolve(test_systems, conf, "test_systems", 5, int),
        days_per_system=resolve(days_per_system, conf, "days_per_system", 20, int),
        fault_prevalence=resolve(prevalence, conf, "prevalence", 0.3, float),
    )
    dataset = generate_dataset(cfg)
    write_dataset_csv(dataset, out_dir)
    write_manifest(out_dir, "synth", asdict(cfg), [])
    click.echo(f"wrote {len(dataset.train)} train / {len(dataset.validation)} val / "
               f"{len(dataset.test)} test days to {out_dir}")


@cli.command()
@click.option("--data", "data_dir", envvar="SOLARFAULT_DATA_DIR", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def ingest(data_dir, out_dir):
    """Parse per-system CSVs and write an ingestion report."""
    schema, days_by_system, split_days, report = load_dataset(data_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ingestion_report(out / "ingestion_report.csv", report)
    write_manifest(out_dir, "ingest", {"data": str(data_dir)},
                   sorted(Path(data_dir).glob("*.csv")) + [Path(data_dir) / "schema.txt"])
    kept = sum(r[1] for r in report)
    dropped = sum(r[2] for r in report)
    click.echo(f"{len(report)} systems, {kept} days kept, {dropped} dropped")


@cli.command("train")
@click.option("--data", "data_dir", envvar="SOLARFAULT_DATA_DIR", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seeds", default=None, help="comma-separated seed list")
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default=None)
@click.option("--detector", type=click.Choice(["vae", "vae-homoscedastic"]), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--beta-nll", type=float, default=None)
def cmd_train(data_dir, out_dir, config_path, seeds, profile, detector, steps,
              beta, beta_nll):
    """Train one checkpoint per seed on the dataset's training split."""
    conf = load_config_file(config_path, "train")
    profile = resolve(profile, conf, "profile", "desk")
    detector = resolve(detector, conf, "detector", "vae")
    seeds = resolve(seeds, conf, "seeds", "0")
    seed_list = [int(s) for s in str(seeds).split(",") if s.strip() != ""]

    schema, _, split_days, _ = load_dataset(data_dir)
    if not split_days.train:
        raise SolarfaultError(f"no training days found under {data_dir}")
    prof = dict(PROFILES[profile])
    if steps is not None or "steps" in conf:
        prof["update_steps"] = resolve(steps, conf, "steps", prof["update_steps"], int)
    if beta is not None or "beta" in conf:
        prof["beta"] = resolve(beta, conf, "beta", prof["beta"], float)
    prof["beta_nll"] = resolve(beta_nll, conf, "beta_nll", 0.5, float)
    prof["n_channels"] = len(schema.channels)
    prof["heteroscedastic"] = detector == "vae"

    stats = fit_normalizer(split_days.train, channel_kinds(schema))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for seed in seed_list:
        cfg = TrainConfig(seed=seed, **prof)
        log_path = out / f"train_log_{detector}_seed{seed}.csv"
        ckpt_path = out / f"ckpt_{detector}_seed{seed}.sfck"
        try:
            model = train(split_days.train, split_days.validation, cfg, stats,
                          schema.smooth_channels, log_path=log_path)
        except TrainingError as exc:
            # keep the last state that produced a finite loss for inspection
            partial = _model_from_snapshot(cfg, stats, schema, exc.last_good)
            save_vae_checkpoint(out / f"ckpt_{detector}_seed{seed}_aborted.sfck", partial)
            raise
        if not cfg.heteroscedastic:
            model.error_scaler = _fit_train_scaler(model, split_days.train)
        save_vae_checkpoint(ckpt_path, model)
        final = model.log_rows[-1]
        summary.append({"seed": seed, "final_train_total": final[1],
                        "final_val_total": final[4], "checkpoint": ckpt_path.name})
        click.echo(f"seed {seed}: final train loss {final[1]:.4f}, "
                   f"val loss {final[4]:.4f} -> {ckpt_path.name}")
    (out / f"train_summary_{detector}.json").write_text(json.dumps(summary, indent=2))
    write_manifest(out_dir, "train",
                   {"data": str(data_dir), "profile": profile, "detector": detector,
                    "seeds": seed_list, **{k: v for k, v in prof.items()}},
                   [Path(data_dir) / "schema.txt", Path(data_dir) / "split.txt"])


def _model_from_snapshot(cfg, stats, schema, snapshot):
    from .vae import VaeModel

    model = VaeModel(cfg, stats, schema.smooth_channels)
    model.load_snapshot(snapshot)
    return model


def _fit_train_scaler(model, train_days):
    errors = []
    for d in train_days:
        x = normalized_values(d, model)
        field = reconstruct(d, model, mode="posterior-mean")
        errors.append(error_vector(x, field.mu))
    return fit_error_scaler(errors, kind="znorm")


def _normalized_matrices(days, stats, schema):
    smooth = set(schema.smooth_channels)
    return [apply_normalizer(d.values, stats, d.channel_names, smooth) for d in days]


@cli.command()
@click.option("--data", "data_dir", envvar="SOLARFAULT_DATA_DIR", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--detector", required=True,
              type=click.Choice(["vae", "vae-homoscedastic", "pca-unscaled", "pca-rescaled"]))
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True), default=None,
              help="VAE checkpoint (required for vae detectors)")
@click.option("--n-components", type=int, default=3, show_default=True)
@click.option("--no-smooth-pca", is_flag=True, default=False,
              help="skip Gaussian smoothing for PCA inputs")
@click.option("--name", default=None, help="basename of the output CSV")
def score(data_dir, out_dir, detector, ckpt_path, n_components, no_smooth_pca, name):
    """Score every test day with the chosen detector."""
    schema, _, split_days, _ = load_dataset(data_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if detector in ("vae", "vae-homoscedastic"):
        if ckpt_path is None:
            raise click.UsageError("--ckpt is required for VAE detectors")
        model = load_vae_checkpoint(ckpt_path)
        if detector == "vae" and not model.cfg.heteroscedastic:
            raise CheckpointError("checkpoint is homoscedastic; use --detector vae-homoscedastic")
        if detector == "vae-homoscedastic" and model.cfg.heteroscedastic:
            raise CheckpointError("checkpoint is heteroscedastic; use --detector vae")
        scorer = vae_scorer(model) if detector == "vae" else homoscedastic_scorer(model)
        entries = score_entries(split_days.test, scorer)
    else:
        if no_smooth_pca:
            schema = replace(schema, smooth_channels=())
        stats = fit_normalizer(split_days.train, channel_kinds(schema))
        train_mats = _normalized_matrices(split_days.train, stats, schema)
        pooled = np.concatenate(train_mats, axis=0)
        model = fit_pca(pooled, n_components)
        scaler = None
        if detector == "pca-rescaled":
            scaler = fit_error_scaler(
                [error_vector(m, reconstruct_pca(m, model)) for m in train_mats],
                kind="znorm")
        save_pca_checkpoint(out / f"ckpt_{detector}.sfck", model, scaler, stats.to_json())
        smooth = set(schema.smooth_channels)

        def scorer(d):
            m = apply_normalizer(d.values, stats, d.channel_names, smooth)
            return day_score(m, model, scaler)
        entries = score_entries(split_days.test, scorer)

    base = name or f"scores_{detector}"
    if ckpt_path is not None:
        stem = Path(ckpt_path).stem
        if "seed" in stem and name is None:
            base = f"scores_{detector}_{stem.split('_')[-1]}"
    csv_path = out / f"{base}.csv"
    write_scores_csv(csv_path, entries)
    inputs = [Path(data_dir) / "schema.txt", Path(data_dir) / "split.txt"]
    if ckpt_path:
        inputs.append(Path(ckpt_path))
    write_manifest(out_dir, "score",
                   {"data": str(data_dir), "detector": detector,
                    "ckpt": ckpt_path, "n_components": n_components}, inputs)
    click.echo(f"wrote {len(entries)} day scores to {csv_path}")


@cli.command("sweep-pca")
@click.option("--data", "data_dir", envvar="SOLARFAULT_DATA_DIR", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--merk-mode", type=click.Choice(["exclude", "normal", "positive"]),
              default="exclude", show_default=True)
def sweep_pca_cmd(data_dir, out_dir, merk_mode):
    """Sweep the PCA component count and evaluate every setting."""
    from .metrics import auc_pr, auc_roc, optimal_f1, system_wise_f1

    schema, _, split_days, _ = load_dataset(data_dir)
    stats = fit_normalizer(split_days.train, channel_kinds(schema))
    train_mats = _normalized_matrices(split_days.train, stats, schema)
    test_days = [d for d in split_days.test
                 if merk_mode != "exclude" or d.label is not DayLabel.MERK]
    test_mats = _normalized_matrices(test_days, stats, schema)
    if merk_mode == "positive":
        labels = np.array([d.label in (DayLabel.FAULT, DayLabel.MERK) for d in test_days])
    else:
        labels = np.array([d.label is DayLabel.FAULT for d in test_days])
    systems = np.array([d.system_id for d in test_days])

    def metrics_fn(scores, labels, systems):
        opt, _ = optimal_f1(scores, labels)
        sw, _ = system_wise_f1(scores, labels, systems)
        return {"optimal_f1": opt, "system_wise_f1": sw,
                "auc_pr": auc_pr(scores, labels), "auc_roc": auc_roc(scores, labels)}

    n_channels = len(schema.channels)
    rows = pca_sweep(train_mats, test_mats, labels, systems,
                     range(1, n_channels + 1), metrics_fn)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out / "pca_sweep.csv", rows)
    write_manifest(out_dir, "sweep-pca", {"data": str(data_dir), "merk_mode": merk_mode},
                   [Path(data_dir) / "schema.txt", Path(data_dir) / "split.txt"])
    click.echo(f"swept n_components 1..{n_channels} -> {out / 'pca_sweep.csv'}")


def _detector_of(path: Path) -> str:
    stem = path.stem
    if stem.startswith("scores_"):
        stem = stem[len("scores_"):]
    # strip a trailing seed suffix so seeds of one detector group together
    parts = stem.rsplit("_", 1)
    if len(parts) == 2 and parts[1].startswith("seed"):
        return parts[0]
    return stem


@cli.command("eval")
@click.argument("score_files", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--merk-mode", type=click.Choice(["exclude", "normal", "positive"]),
              default="exclude", show_default=True)
@click.option("--system-mode", type=click.Choice(["exclude", "credit_clean"]),
              default="exclude", show_default=True)
def eval_cmd(score_files, out_dir, merk_mode, system_mode):
    """Evaluate score CSVs; group seeds per detector into mean +- std."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_detector: dict[str, list] = defaultdict(list)
    for f in score_files:
        path = Path(f)
        entries = read_scores_csv(path)
        rep = evaluate(entries, merk_mode=merk_mode, system_mode=system_mode)
        (out / f"report_{path.stem}.json").write_text(rep.to_json())
        (out / f"report_{path.stem}.txt").write_text(rep.format_table() + "\n")
        by_detector[_detector_of(path)].append(rep)

    lines = [f"{'detector':<22}{'sys-F1':>14}{'opt-F1':>14}{'AUC-PR':>14}{'AUC-ROC':>14}"]
    comparison = {}
    for det in sorted(by_detector):
        reps = by_detector[det]
        cells = {}
        for attr in ("system_wise_f1", "optimal_f1", "auc_pr", "auc_roc"):
            vals = np.array([getattr(r, attr) for r in reps])
            cells[attr] = {"mean": float(vals.mean()),
                           "std": float(vals.std()) if len(vals) > 1 else None}
        comparison[det] = cells

        def fmt(c):
            return (f"{c['mean']:.3f}" if c["std"] is None
                    else f"{c['mean']:.3f}±{c['std']:.3f}")
        lines.append(f"{det:<22}{fmt(cells['system_wise_f1']):>14}"
                     f"{fmt(cells['optimal_f1']):>14}{fmt(cells['auc_pr']):>14}"
                     f"{fmt(cells['auc_roc']):>14}")
    table = "\n".join(lines)
    (out / "comparison.txt").write_text(table + "\n")
    (out / "comparison.json").write_text(json.dumps(comparison, indent=2))
    write_manifest(out_dir, "eval",
                   {"merk_mode": merk_mode, "system_mode": system_mode,
                    "score_files": [str(f) for f in score_files]}, score_files)
    click.echo(table)


@cli.command("report")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--cap", type=float, default=3.0, show_default=True)
@click.option("--system", "system_id", default=None,
              help="only this system (default: all systems in the CSV)")
def report_cmd(scores_path, out_dir, cap, system_id):
    """Render per-system anomaly-score figures (SVG) plus plot CSVs."""
    entries = read_scores_csv(scores_path)
    by_system: dict[str, list] = defaultdict(list)
    for e in entries:
        by_system[e.system_id].append(e)
    if system_id is not None:
        if system_id not in by_system:
            raise SolarfaultError(f"unknown system id {system_id!r} in {scores_path}")
        by_system = {system_id: by_system[system_id]}
    for sid, sys_entries in sorted(by_system.items()):
        sys_entries.sort(key=lambda e: e.day_index)
        svg, _ = report_system(out_dir, sid, sys_entries, cap)
        click.echo(f"wrote {svg}")
    write_manifest(out_dir, "report",
                   {"scores": str(scores_path), "cap": cap, "system": system_id},
                   [scores_path])


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except NumericError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        sys.exit(4)
    except SolarfaultError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    sys.exit(0)


if __name__ == "__main__":
    main()
