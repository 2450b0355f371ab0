"""Command-line pipeline: synth, ingest, featurize, train, evaluate,
importance, project, summarize.

Every output CSV starts with `# key=value` metadata lines (tool version,
seed, config digest) and is written atomically: the file only replaces an
existing one once its content is complete. Outputs carry no timestamps, so
rerunning a command with the same inputs reproduces them byte for byte.
Exit codes: 0 success, 2 input/schema error, 3 numerical failure,
4 configuration error.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd
import yaml

from . import __version__, artifacts, evaluate, projection, stacking, synth
from .dataset import build_table, load_feature_rows, load_yields
from .errors import ConfigError, NumericalError, OrchardcastError, SchemaError
from .grids import aggregate_to_county, load_crop_mask, load_grid
from .learners import ForestConfig, GBDTConfig, RidgeConfig, r2_score
from .phenology import featurize_grid_years, load_window_specs

_LEARNER_BUILDERS = {"ridge": RidgeConfig, "random_forest": ForestConfig, "gbdt": GBDTConfig}


def _fail(exc: Exception, code: int) -> None:
    kind = {2: "input", 3: "numerical", 4: "config"}[code]
    message = str(exc).replace("\n", " ")
    click.echo(f"error kind={kind} msg={message!r}", err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SchemaError as exc:
            _fail(exc, 2)
        except NumericalError as exc:
            _fail(exc, 3)
        except ConfigError as exc:
            _fail(exc, 4)
        except OrchardcastError as exc:
            _fail(exc, 2)
        except OSError as exc:
            _fail(exc, 2)

    return wrapper


def _atomic_write_text(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content)
    os.replace(tmp, path)


def _meta_lines(command: str, seed: int | None, config_digest: str, extra: dict | None = None) -> list[str]:
    lines = [
        f"# tool=orchardcast",
        f"# version={__version__}",
        f"# command={command}",
        f"# config_digest={config_digest}",
    ]
    if seed is not None:
        lines.insert(3, f"# seed={seed}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={value}")
    return lines


def _digest(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _write_csv(path: Path, df: pd.DataFrame, meta: list[str]) -> None:
    body = df.to_csv(index=False)
    _atomic_write_text(path, "\n".join(meta) + "\n" + body)


def _parse_years(text: str) -> range:
    try:
        start, _, end = text.partition(":")
        lo, hi = int(start), int(end)
    except ValueError:
        raise ConfigError(f"--years expects START:END, got {text!r}")
    if hi < lo:
        raise ConfigError(f"--years range {text!r} is empty")
    return range(lo, hi + 1)


def _load_grids_dir(grids_dir: Path) -> dict:
    manifests = sorted(grids_dir.glob("*.manifest.yaml"))
    if not manifests:
        raise SchemaError(f"no *.manifest.yaml files in {grids_dir}")
    grids = {}
    for mpath in manifests:
        var = mpath.name.removesuffix(".manifest.yaml")
        dpath = grids_dir / f"{var}.data.csv"
        if not dpath.exists():
            raise SchemaError(f"manifest {mpath} has no matching data file {dpath}")
        grids[var] = load_grid(mpath, dpath)
    return grids


def _stack_config(config_path: str | None, seed: int) -> stacking.StackConfig:
    """The high-quality preset, with optional overrides from a run config."""
    overrides = {}
    learner_params: dict[str, dict] = {}
    names = ["ridge", "random_forest", "gbdt"]
    if config_path:
        raw = yaml.safe_load(Path(config_path).read_text()) or {}
        section = raw.get("stack", {})
        if not isinstance(section, dict):
            raise ConfigError(f"{config_path}: 'stack' section must be a mapping")
        for key in ("n_layers", "bag_folds", "bag_repeats", "ensemble_iterations"):
            if key in section:
                overrides[key] = int(section[key])
        if "base_learners" in section:
            names = list(section["base_learners"])
        learner_params = section.get("learners", {}) or {}
    bases = []
    for name in names:
        if name not in _LEARNER_BUILDERS:
            raise ConfigError(f"unknown base learner {name!r}; choose from {sorted(_LEARNER_BUILDERS)}")
        try:
            bases.append(_LEARNER_BUILDERS[name](**learner_params.get(name, {})))
        except TypeError as exc:
            raise ConfigError(f"bad parameters for learner {name!r}: {exc}")
    return stacking.StackConfig(base_configs=tuple(bases), seed=seed, **overrides)


@click.group()
@click.version_option(version=__version__)
def main():
    """Almond-yield modeling pipeline over gridded daily climate data."""


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--seed", default=42, show_default=True)
@click.option("--members", default=2, show_default=True, help="Scenario members to generate.")
@click.option("--noise-sigma", default=0.07, show_default=True)
@_guarded
def cmd_synth(out_dir: Path, seed: int, members: int, noise_sigma: float):
    """Generate the bundled synthetic dataset tree."""
    layout = synth.generate(out_dir, seed=seed, n_members=members, noise_sigma=noise_sigma)
    click.echo(f"synthetic dataset written to {layout.root}")


@main.command("ingest")
@click.option("--grids", "grids_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--mask-year", type=int, default=None, help="Mask year to weight with (default: latest).")
@_guarded
def cmd_ingest(grids_dir: Path, mask_path: Path, out_path: Path, mask_year: int | None):
    """Aggregate gridded variables to county daily series."""
    grids = _load_grids_dir(grids_dir)
    mask = load_crop_mask(mask_path)
    year = mask_year if mask_year is not None else max(mask.years)
    frames = []
    for var in sorted(grids):
        for series in aggregate_to_county(grids[var], mask, year):
            frames.append(
                pd.DataFrame(
                    {
                        "county": series.county,
                        "variable": var,
                        "date": np.datetime_as_string(series.dates, unit="D"),
                        "value": series.values,
                    }
                )
            )
    df = pd.concat(frames, ignore_index=True)
    digest = _digest({"grids": grids_dir.name, "mask": mask_path.name, "mask_year": year})
    _write_csv(out_path, df, _meta_lines("ingest", None, digest, {"mask_year": year}))
    click.echo(f"wrote {len(df)} county-daily rows to {out_path}")


@main.command("featurize")
@click.option("--grids", "grids_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--phenology", "phenology_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--years", required=True, help="Harvest years START:END (inclusive).")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@_guarded
def cmd_featurize(grids_dir: Path, mask_path: Path, phenology_path: Path, years: str, out_path: Path):
    """Extract the 13 phenology-window features per (county, harvest year)."""
    grids = _load_grids_dir(grids_dir)
    mask = load_crop_mask(mask_path)
    specs = load_window_specs(phenology_path)
    rows = featurize_grid_years(grids, mask, specs, _parse_years(years))
    names = [s.name for s in specs]
    df = pd.DataFrame(
        [{"county": r.county, "year": r.year, **{n: r.features[n] for n in names}} for r in rows]
    )
    digest = _digest({"grids": grids_dir.name, "mask": mask_path.name, "phenology": phenology_path.name, "years": years})
    _write_csv(out_path, df, _meta_lines("featurize", None, digest))
    click.echo(f"wrote {len(df)} feature rows to {out_path}")


@main.command("train")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--yields", "yields_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--seed", default=0, show_default=True)
@click.option("--preset", default="high-quality", show_default=True, type=click.Choice(["high-quality"]))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
@_guarded
def cmd_train(features_path: Path, yields_path: Path, out_path: Path, seed: int, preset: str, config_path):
    """Fit the stacked ensemble on all rows with yields."""
    table = build_table(load_feature_rows(features_path), load_yields(yields_path))
    config = _stack_config(config_path, seed)
    ensemble = stacking.fit_stack(config, table)
    tmp = out_path.with_name(out_path.name + ".tmp")
    artifacts.save_ensemble(ensemble, tmp)
    os.replace(tmp, out_path)
    click.echo(
        f"trained stack ({len(ensemble.layers)} layers, "
        f"{sum(len(l) for l in ensemble.layers)} bagged models, "
        f"OOF RMSE {ensemble.oof_rmse:.4f}) -> {out_path}"
    )


@main.command("evaluate")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--yields", "yields_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--folds", default=5, show_default=True)
@click.option("--test-frac", default=0.3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--preset", default="high-quality", show_default=True, type=click.Choice(["high-quality"]))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
@_guarded
def cmd_evaluate(features_path: Path, yields_path: Path, out_path: Path, folds: int, test_frac: float, seed: int, preset: str, config_path):
    """Benchmark stack vs linear regression vs random forest."""
    table = build_table(load_feature_rows(features_path), load_yields(yields_path))
    stack_cfg = _stack_config(config_path, seed)
    by_name = {c.name: c for c in stack_cfg.base_configs}
    models = [
        ("stack", stack_cfg),
        ("linear_regression", by_name.get("ridge", RidgeConfig())),
        ("random_forest", by_name.get("random_forest", ForestConfig())),
    ]
    report = evaluate.run_benchmark(table, models, k=folds, test_fraction=test_frac, seed=seed)
    digest = _digest({"features": features_path.name, "folds": folds, "test_frac": test_frac, "seed": seed})
    tmp = out_path.with_name(out_path.name + ".tmp")
    evaluate.save_report(report, tmp, header_lines=_meta_lines("evaluate", seed, digest))
    os.replace(tmp, out_path)
    click.echo(evaluate.format_report(report))
    comparison = evaluate.compare_rows(report)
    if comparison["stack_best_on_all_cells"]:
        click.echo("stack ensemble is best on all four cells")


@main.command("importance")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--features", "features_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--yields", "yields_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--repeats", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_guarded
def cmd_importance(model_path: Path, features_path: Path, yields_path: Path, out_path: Path, repeats: int, seed: int):
    """Permutation importance of every input column."""
    ensemble = artifacts.load_ensemble(model_path)
    table = build_table(load_feature_rows(features_path), load_yields(yields_path))
    rows = table.rows_with_targets
    report = stacking.permutation_importance(
        ensemble, table.X[rows], table.y[rows], repeats=repeats, seed=seed
    )
    df = pd.DataFrame(
        report.ordered(), columns=["feature", "mean_r2_drop", "std_r2_drop", "rank"]
    )
    digest = _digest({"model": model_path.name, "repeats": repeats, "seed": seed})
    _write_csv(out_path, df, _meta_lines("importance", seed, digest, {"baseline_r2": repr(report.baseline_r2)}))
    top = df.iloc[0]
    click.echo(f"top feature: {top.feature} (mean R2 drop {top.mean_r2_drop:.4f})")


@main.command("project")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--members", "roster_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--phenology", "phenology_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--rcp", required=True, type=click.Choice(["4.5", "8.5"]))
@click.option("--tech", required=True, type=click.Choice(["wtech", "wotech"]))
@click.option("--years", required=True, help="Projection years START:END (inclusive).")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@_guarded
def cmd_project(model_path: Path, roster_path: Path, mask_path: Path, phenology_path: Path, rcp: str, tech: str, years: str, out_path: Path):
    """Run every roster member through the trained model for one scenario."""
    ensemble = artifacts.load_ensemble(model_path)
    mask = load_crop_mask(mask_path)
    specs = load_window_specs(phenology_path)
    year_range = _parse_years(years)
    roster = yaml.safe_load(roster_path.read_text())
    if not isinstance(roster, dict) or "members" not in roster:
        raise SchemaError(f"{roster_path}: expected a mapping with a 'members' list")

    frames = []
    for member in roster["members"]:
        member_id = str(member["id"])
        member_dir = roster_path.parent / str(member["path"]) / f"rcp{rcp.replace('.', '')}"
        if not member_dir.is_dir():
            raise SchemaError(f"member {member_id}: no directory {member_dir}")
        grids = _load_grids_dir(member_dir)
        spec = projection.ScenarioSpec(member_id=member_id, rcp=rcp, tech=tech, years=year_range)
        result = projection.project_member(ensemble, grids, spec, mask, specs)
        frames.append(
            pd.DataFrame(
                {
                    "scenario": spec.label,
                    "member": member_id,
                    "year": result.years,
                    "county": result.counties,
                    "yield": result.values,
                }
            )
        )
    df = pd.concat(frames, ignore_index=True)
    digest = _digest({"model": model_path.name, "rcp": rcp, "tech": tech, "years": years})
    _write_csv(out_path, df, _meta_lines("project", None, digest, {"rcp": rcp, "tech": tech}))
    click.echo(f"wrote {len(df)} projected county-year rows to {out_path}")


@main.command("summarize")
@click.option("--projections", "proj_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--yields", "yields_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--compare-observed", is_flag=True, help="Print R2 vs observed statewide yields on overlap years.")
@_guarded
def cmd_summarize(proj_path: Path, yields_path: Path, out_path: Path, compare_observed: bool):
    """Collapse member projections to per-year mean and inter-quantile range."""
    df = pd.read_csv(proj_path, comment="#", float_precision="round_trip")
    expected = ["scenario", "member", "year", "county", "yield"]
    if list(df.columns) != expected:
        raise SchemaError(f"{proj_path}: expected columns {expected}, got {list(df.columns)}")
    records = load_yields(yields_path)
    areas = projection.frozen_areas(records)

    out_frames = []
    summaries = {}
    for scenario, group in df.groupby("scenario", sort=True):
        members = {}
        for member, mgroup in group.groupby("member", sort=True):
            years = np.array(sorted(mgroup["year"].unique()), dtype=np.int64)
            values = np.empty(len(years))
            for i, year in enumerate(years):
                sub = mgroup[mgroup["year"] == year].sort_values("county")
                num = sum(v * areas[c] for c, v in zip(sub["county"], sub["yield"]))
                den = sum(areas[c] for c in sub["county"])
                values[i] = num / den
            members[str(member)] = (years, values)
        summary = projection.summarize_ensemble(members, scenario_label=str(scenario))
        summaries[str(scenario)] = summary
        out_frames.append(
            pd.DataFrame(
                {
                    "scenario": str(scenario),
                    "year": summary.years,
                    "mean": summary.mean,
                    "q25": summary.q25,
                    "q75": summary.q75,
                }
            )
        )
    out_df = pd.concat(out_frames, ignore_index=True)
    digest = _digest({"projections": proj_path.name, "yields": yields_path.name})
    _write_csv(out_path, out_df, _meta_lines("summarize", None, digest))
    click.echo(f"wrote {len(out_df)} summary rows to {out_path}")

    if compare_observed:
        obs_years, obs_values = projection.observed_statewide(records)
        for label, summary in sorted(summaries.items()):
            overlap = np.intersect1d(summary.years, obs_years)
            if len(overlap) < 3:
                click.echo(f"{label}: fewer than 3 overlap years with observations, skipping")
                continue
            sim = summary.mean[np.searchsorted(summary.years, overlap)]
            obs = obs_values[np.searchsorted(obs_years, overlap)]
            click.echo(f"{label}: R2 vs observed over {len(overlap)} years = {r2_score(obs, sim):.4f}")


if __name__ == "__main__":
    main()
