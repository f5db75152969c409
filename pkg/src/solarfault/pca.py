"""PCA-reconstruction baselines with optional per-(channel, minute)
error rescaling, plus the component-count sweep."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .checkpoint import read_checkpoint, write_checkpoint
from .errors import ParameterError, ShapeError

SCALE_FLOOR = 1e-6


@dataclass
class PcaModel:
    mean: np.ndarray  # (F,)
    components: np.ndarray  # (n_components, F), orthonormal rows
    explained_variance_ratio: np.ndarray  # (n_components,)


@dataclass
class ErrorScaler:
    """Location/scale per (minute-of-day, channel); both (T, F)."""

    kind: str  # "znorm" | "interquartile"
    loc: np.ndarray
    scale: np.ndarray


def fit_pca(rows: np.ndarray, n_components: int) -> PcaModel:
    """Top eigenvectors of the sample covariance of (N, F) rows.

    Sign convention: the largest-magnitude coordinate of each component
    is made positive, so fits are deterministic.
    """
    rows = np.asarray(rows, dtype=np.float64)
    n, f = rows.shape
    if not 1 <= n_components <= f:
        raise ParameterError(f"n_components must be in [1, {f}], got {n_components}")
    if n <= f:
        raise ParameterError(f"need more rows ({n}) than features ({f})")
    mean = rows.mean(axis=0)
    cov = np.cov(rows, rowvar=False)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    comps = eigvecs[:, order].T[:n_components]
    for i in range(comps.shape[0]):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    total = eigvals.sum()
    ratio = eigvals[:n_components] / total if total > 0 else np.zeros(n_components)
    return PcaModel(mean=mean, components=comps, explained_variance_ratio=ratio)


def reconstruct_pca(x: np.ndarray, model: PcaModel) -> np.ndarray:
    """Project onto the component span and back: mean + C^T C (x - mean).

    Works on a single (F,) vector or a stack (..., F).
    """
    centered = np.asarray(x, dtype=np.float64) - model.mean
    return model.mean + centered @ model.components.T @ model.components


def error_vector(day: np.ndarray, recon: np.ndarray) -> np.ndarray:
    if day.shape != recon.shape:
        raise ShapeError(f"shape mismatch {day.shape} vs {recon.shape}")
    return np.abs(day - recon)


def fit_error_scaler(error_matrices, kind: str = "znorm") -> ErrorScaler:
    """Per-cell statistics of the (T, F) training error matrices."""
    mats = [np.asarray(e, dtype=np.float64) for e in error_matrices]
    if not mats:
        raise ParameterError("empty training error collection")
    errors = np.stack(mats)
    if kind == "znorm":
        loc = errors.mean(axis=0)
        scale = errors.std(axis=0)  # population convention
    elif kind == "interquartile":
        loc = np.median(errors, axis=0)
        q75, q25 = np.percentile(errors, [75, 25], axis=0)  # linear interpolation
        scale = q75 - q25
    else:
        raise ParameterError(f"unknown scaler kind {kind!r}")
    return ErrorScaler(kind=kind, loc=loc, scale=np.maximum(scale, SCALE_FLOOR))


def apply_scaler(errors: np.ndarray, scaler: ErrorScaler) -> np.ndarray:
    if errors.shape != scaler.loc.shape:
        raise ShapeError(f"shape mismatch {errors.shape} vs {scaler.loc.shape}")
    return (errors - scaler.loc) / scaler.scale


def day_score(day: np.ndarray, model: PcaModel, scaler: ErrorScaler | None = None) -> float:
    """Mean (optionally rescaled) absolute reconstruction error of a day."""
    err = error_vector(day, reconstruct_pca(day, model))
    if scaler is not None:
        err = apply_scaler(err, scaler)
    return float(err.mean())


def pca_sweep(train_matrices, test_matrices, test_labels, test_systems,
              component_range, metrics_fn) -> list[dict]:
    """Fit and score for each component count; one result row per n.

    ``metrics_fn(scores, labels, systems)`` must return a dict with keys
    optimal_f1, system_wise_f1, auc_pr, auc_roc.
    """
    train_matrices = [np.asarray(m, dtype=np.float64) for m in train_matrices]
    test_matrices = [np.asarray(m, dtype=np.float64) for m in test_matrices]
    pooled = np.concatenate(train_matrices, axis=0)
    rows = []
    for n in component_range:
        start = time.perf_counter()
        model = fit_pca(pooled, n)
        train_errors = [error_vector(m, reconstruct_pca(m, model)) for m in train_matrices]
        scaler = fit_error_scaler(train_errors, kind="znorm")
        unscaled = np.array([day_score(m, model) for m in test_matrices])
        rescaled = np.array([day_score(m, model, scaler) for m in test_matrices])
        m_unscaled = metrics_fn(unscaled, test_labels, test_systems)
        m_rescaled = metrics_fn(rescaled, test_labels, test_systems)
        rows.append({
            "n_components": n,
            "cum_explained_var": float(model.explained_variance_ratio.sum()),
            "optf1_unscaled": m_unscaled["optimal_f1"],
            "optf1_rescaled": m_rescaled["optimal_f1"],
            "syswise_f1": m_rescaled["system_wise_f1"],
            "auc_pr": m_rescaled["auc_pr"],
            "auc_roc": m_rescaled["auc_roc"],
            "auc_roc_unscaled": m_unscaled["auc_roc"],
            "wall_seconds": time.perf_counter() - start,
        })
    return rows


SWEEP_COLUMNS = ["n_components", "cum_explained_var", "optf1_unscaled", "optf1_rescaled",
                 "syswise_f1", "auc_pr", "auc_roc", "wall_seconds"]


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in SWEEP_COLUMNS])


def save_pca_checkpoint(path, model: PcaModel, scaler: ErrorScaler | None = None,
                        norm_stats_json: str | None = None) -> None:
    header = {"norm_stats": norm_stats_json, "has_scaler": scaler is not None}
    arrays = {
        "pca.mean": model.mean,
        "pca.components": model.components,
        "pca.explained_variance_ratio": model.explained_variance_ratio,
    }
    if scaler is not None:
        header["scaler_kind"] = scaler.kind
        arrays["scaler.loc"] = scaler.loc
        arrays["scaler.scale"] = scaler.scale
    write_checkpoint(path, "PCA0", header, arrays)


def load_pca_checkpoint(path):
    _, header, arrays = read_checkpoint(path, expected_tag="PCA0")
    model = PcaModel(
        mean=arrays["pca.mean"].astype(np.float64),
        components=arrays["pca.components"].astype(np.float64),
        explained_variance_ratio=arrays["pca.explained_variance_ratio"].astype(np.float64),
    )
    scaler = None
    if header.get("has_scaler"):
        scaler = ErrorScaler(kind=header["scaler_kind"],
                             loc=arrays["scaler.loc"].astype(np.float64),
                             scale=arrays["scaler.scale"].astype(np.float64))
    return model, scaler, header.get("norm_stats")
