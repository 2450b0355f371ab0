"""Versioned binary container for fitted models and ensembles.

Layout: an ASCII magic line, one JSON header line (format tag, version,
column names, array manifest), then the raw bytes of every array in
manifest order (C-contiguous, little-endian). Writing is deterministic, so
serialize(load(serialize(m))) is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .dataset import Normalizer
from .errors import SchemaError
from .learners import (
    ForestConfig,
    ForestModel,
    GBDTConfig,
    GBDTModel,
    RegressionTree,
    RidgeConfig,
    RidgeModel,
)
from .stacking import BaggedModel, StackConfig, StackEnsemble

__all__ = ["save_ensemble", "load_ensemble", "save_model", "load_model"]

MAGIC = b"ORCHARDCAST-ARTIFACT\n"
FORMAT_VERSION = 1

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8"), "<i4": np.dtype("<i4"), "|b1": np.dtype("|b1")}


class _ArrayBank:
    def __init__(self):
        self.arrays: list[np.ndarray] = []

    def put(self, arr: np.ndarray) -> dict:
        arr = np.ascontiguousarray(arr)
        if arr.dtype == np.bool_:
            arr = arr.astype("|b1")
        elif arr.dtype.kind == "f":
            arr = arr.astype("<f8")
        elif arr.dtype == np.int32:
            arr = arr.astype("<i4")
        elif arr.dtype.kind in "iu":
            arr = arr.astype("<i8")
        else:
            raise SchemaError(f"cannot serialize array dtype {arr.dtype}")
        self.arrays.append(arr)
        return {"__array__": len(self.arrays) - 1}


def _encode(value: Any, bank: _ArrayBank) -> Any:
    if isinstance(value, np.ndarray):
        return bank.put(value)
    if isinstance(value, dict):
        return {k: _encode(v, bank) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v, bank) for v in value]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    raise SchemaError(f"cannot serialize value of type {type(value)!r}")


def _decode(value: Any, arrays: list[np.ndarray]) -> Any:
    if isinstance(value, dict):
        if set(value.keys()) == {"__array__"}:
            return arrays[value["__array__"]]
        return {k: _decode(v, arrays) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v, arrays) for v in value]
    return value


def _write(path: str | Path, format_tag: str, columns: list[str] | None, state: dict) -> None:
    bank = _ArrayBank()
    tree = _encode(state, bank)
    manifest = [
        {"dtype": a.dtype.str, "shape": list(a.shape), "nbytes": a.nbytes} for a in bank.arrays
    ]
    header = {
        "format": format_tag,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "columns": columns,
        "arrays": manifest,
        "state": tree,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(payload)
        fh.write(b"\n")
        for arr in bank.arrays:
            fh.write(arr.tobytes())


def _read(path: str | Path, expect_format: str) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != MAGIC:
            raise SchemaError(f"{path}: not an orchardcast artifact")
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise SchemaError(
                f"{path}: artifact version mismatch (expected {FORMAT_VERSION}, "
                f"found {header.get('version')})"
            )
        if header.get("format") != expect_format:
            raise SchemaError(
                f"{path}: artifact format {header.get('format')!r}, expected {expect_format!r}"
            )
        arrays = []
        for meta in header["arrays"]:
            dtype = _DTYPES.get(meta["dtype"])
            if dtype is None:
                raise SchemaError(f"{path}: unknown array dtype {meta['dtype']}")
            buf = fh.read(meta["nbytes"])
            if len(buf) != meta["nbytes"]:
                raise SchemaError(f"{path}: truncated artifact")
            arrays.append(np.frombuffer(buf, dtype=dtype).reshape(meta["shape"]).copy())
    return header, {"arrays": arrays}


# -- state conversion -------------------------------------------------------

def _tree_state(tree: RegressionTree) -> dict:
    return {
        "feature": tree.feature,
        "threshold": tree.threshold,
        "left": tree.left,
        "right": tree.right,
        "value": tree.value,
        "n_features": tree.n_features,
    }


def _tree_from(state: dict) -> RegressionTree:
    return RegressionTree(
        feature=state["feature"].astype(np.int32),
        threshold=state["threshold"],
        left=state["left"].astype(np.int32),
        right=state["right"].astype(np.int32),
        value=state["value"],
        n_features=int(state["n_features"]),
    )


def _config_state(config) -> dict:
    if isinstance(config, RidgeConfig):
        return {"kind": "ridge", "lam": config.lam, "seed": config.seed}
    if isinstance(config, ForestConfig):
        return {
            "kind": "random_forest",
            "n_trees": config.n_trees,
            "min_leaf": config.min_leaf,
            "max_depth": config.max_depth,
            "feature_fraction": config.feature_fraction,
            "bootstrap": config.bootstrap,
            "seed": config.seed,
        }
    if isinstance(config, GBDTConfig):
        return {
            "kind": "gbdt",
            "n_rounds": config.n_rounds,
            "learning_rate": config.learning_rate,
            "max_depth": config.max_depth,
            "min_leaf": config.min_leaf,
            "row_subsample": config.row_subsample,
            "seed": config.seed,
        }
    raise SchemaError(f"unknown learner config {config!r}")


def _config_from(state: dict):
    kind = state["kind"]
    if kind == "ridge":
        return RidgeConfig(lam=state["lam"], seed=state["seed"])
    if kind == "random_forest":
        return ForestConfig(
            n_trees=state["n_trees"],
            min_leaf=state["min_leaf"],
            max_depth=state["max_depth"],
            feature_fraction=state["feature_fraction"],
            bootstrap=state["bootstrap"],
            seed=state["seed"],
        )
    if kind == "gbdt":
        return GBDTConfig(
            n_rounds=state["n_rounds"],
            learning_rate=state["learning_rate"],
            max_depth=state["max_depth"],
            min_leaf=state["min_leaf"],
            row_subsample=state["row_subsample"],
            seed=state["seed"],
        )
    raise SchemaError(f"unknown learner kind {kind!r}")


def _model_state(model) -> dict:
    if isinstance(model, RidgeModel):
        return {"kind": "ridge", "coef": model.coef, "intercept": model.intercept, "columns": model.columns}
    if isinstance(model, ForestModel):
        return {"kind": "random_forest", "trees": [_tree_state(t) for t in model.trees], "columns": model.columns}
    if isinstance(model, GBDTModel):
        return {
            "kind": "gbdt",
            "base": model.base,
            "learning_rate": model.learning_rate,
            "trees": [_tree_state(t) for t in model.trees],
            "columns": model.columns,
        }
    raise SchemaError(f"unknown model type {type(model)!r}")


def _model_from(state: dict):
    kind = state["kind"]
    if kind == "ridge":
        return RidgeModel(coef=state["coef"], intercept=state["intercept"], columns=state["columns"])
    if kind == "random_forest":
        return ForestModel(trees=[_tree_from(t) for t in state["trees"]], columns=state["columns"])
    if kind == "gbdt":
        return GBDTModel(
            base=state["base"],
            learning_rate=state["learning_rate"],
            trees=[_tree_from(t) for t in state["trees"]],
            columns=state["columns"],
        )
    raise SchemaError(f"unknown model kind {kind!r}")


def _bagged_state(bag: BaggedModel) -> dict:
    return {
        "config": _config_state(bag.config),
        "k": bag.k,
        "repeats": bag.repeats,
        "seed": bag.seed,
        "models": [_model_state(m) for m in bag.models],
        "oof": bag.oof,
        "fold_assignments": bag.fold_assignments,
        "train_row_ids": list(bag.train_row_ids),
    }


def _bagged_from(state: dict) -> BaggedModel:
    return BaggedModel(
        config=_config_from(state["config"]),
        k=int(state["k"]),
        repeats=int(state["repeats"]),
        seed=int(state["seed"]),
        models=[_model_from(m) for m in state["models"]],
        oof=state["oof"],
        fold_assignments=state["fold_assignments"],
        train_row_ids=list(state["train_row_ids"]),
    )


def _normalizer_state(norm: Normalizer) -> dict:
    return {
        "column_names": norm.column_names,
        "mean": norm.mean,
        "std": norm.std,
        "n_training_rows": norm.n_training_rows,
        "training_only": norm.training_only,
    }


def _normalizer_from(state: dict) -> Normalizer:
    return Normalizer(
        column_names=list(state["column_names"]),
        mean=state["mean"],
        std=state["std"],
        n_training_rows=int(state["n_training_rows"]),
        training_only=bool(state["training_only"]),
    )


def save_model(model, path: str | Path) -> None:
    """Persist one fitted base learner."""
    _write(path, "model", getattr(model, "columns", None), _model_state(model))


def load_model(path: str | Path):
    header, data = _read(path, "model")
    return _model_from(_decode(header["state"], data["arrays"]))


def save_ensemble(ensemble: StackEnsemble, path: str | Path) -> None:
    """Persist a stack ensemble with its fold models, normalizer, and config."""
    state = {
        "config": {
            "base_configs": [_config_state(c) for c in ensemble.config.base_configs],
            "n_layers": ensemble.config.n_layers,
            "bag_folds": ensemble.config.bag_folds,
            "bag_repeats": ensemble.config.bag_repeats,
            "ensemble_iterations": ensemble.config.ensemble_iterations,
            "preset": ensemble.config.preset,
            "seed": ensemble.config.seed,
        },
        "normalizer": _normalizer_state(ensemble.normalizer),
        "column_names": ensemble.column_names,
        "layers": [[_bagged_state(b) for b in layer] for layer in ensemble.layers],
        "weights": ensemble.weights,
        "seed": ensemble.seed,
        "oof_rmse": ensemble.oof_rmse,
    }
    _write(path, "stack-ensemble", ensemble.column_names, state)


def load_ensemble(path: str | Path) -> StackEnsemble:
    header, data = _read(path, "stack-ensemble")
    state = _decode(header["state"], data["arrays"])
    cfg = state["config"]
    config = StackConfig(
        base_configs=tuple(_config_from(c) for c in cfg["base_configs"]),
        n_layers=int(cfg["n_layers"]),
        bag_folds=int(cfg["bag_folds"]),
        bag_repeats=int(cfg["bag_repeats"]),
        ensemble_iterations=int(cfg["ensemble_iterations"]),
        preset=cfg["preset"],
        seed=int(cfg["seed"]),
    )
    return StackEnsemble(
        config=config,
        normalizer=_normalizer_from(state["normalizer"]),
        column_names=list(state["column_names"]),
        layers=[[_bagged_from(b) for b in layer] for layer in state["layers"]],
        weights=state["weights"],
        seed=int(state["seed"]),
        oof_rmse=float(state["oof_rmse"]),
    )
