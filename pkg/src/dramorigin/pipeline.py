"""Glue between dump files and feature matrices."""

from __future__ import annotations

import numpy as np

from . import svdd
from .dumpio import DumpReader, ModuleRecord
from .features import extract_features, feature_order_fingerprint
from .protocol import GroupSource


def dump_features(path) -> tuple[ModuleRecord, list[tuple[int, int]], np.ndarray]:
    """Feature matrix of every complete page group, rows sorted by (bank, row)."""
    reader = DumpReader(path)
    source = GroupSource(reader)
    keys = source.keys()
    x = np.array([extract_features(g) for _, g in source.groups(keys)]).reshape(len(keys), -1)
    return reader.meta, keys, x


def subsample(n: int, size: int | None, seed: int) -> np.ndarray:
    """Sorted seeded subset of ``range(n)``; everything when ``size`` is None or >= n."""
    if size is None or size >= n:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))


def build_model(x_raw, class_tag: int, C_grid, gamma_grid, folds: int = 5, seed: int = 0,
                tune_pages: int | None = None):
    """Standardise, tune (C, gamma) when either grid has several values, then train.

    Tuning runs on at most ``tune_pages`` seeded rows; the final model sees all rows.
    Returns ``(model, tune_result_or_None)``.
    """
    x_raw = np.atleast_2d(np.asarray(x_raw, dtype=np.float64))
    scaler = svdd.Scaler.fit(x_raw)
    z = scaler.transform(x_raw)
    result = None
    if len(C_grid) == 1 and len(gamma_grid) == 1:
        C, gamma = float(C_grid[0]), float(gamma_grid[0])
    else:
        idx = subsample(len(z), tune_pages, seed)
        result = svdd.tune(z[idx], C_grid, gamma_grid, k=folds, seed=seed)
        C, gamma = result.C, result.gamma
    model = svdd.train(z, C, gamma, scaler, class_tag, feature_fingerprint=feature_order_fingerprint())
    if result is not None:
        model.info["tune"] = result.to_dict()
    return model, result
