"""Channel normalization, Gaussian smoothing and day/token reshaping."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChannelError, ParameterError, SchemaError, ShapeError

# widening of the min/max range so training values land strictly inside (0, 1)
MINMAX_EPS = 1e-3


@dataclass(frozen=True)
class ChannelStats:
    kind: str  # "znorm" | "minmax"
    loc: float  # mean | widened min
    scale: float  # std | widened range


@dataclass(frozen=True)
class NormStats:
    """Per-channel normalization statistics, fitted on training data only."""

    channel_names: tuple[str, ...]
    stats: tuple[ChannelStats, ...]
    version: int = 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "channels": [
                    {"name": n, "kind": s.kind, "loc": s.loc, "scale": s.scale}
                    for n, s in zip(self.channel_names, self.stats)
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "NormStats":
        doc = json.loads(text)
        return cls(
            channel_names=tuple(c["name"] for c in doc["channels"]),
            stats=tuple(
                ChannelStats(c["kind"], float(c["loc"]), float(c["scale"]))
                for c in doc["channels"]
            ),
            version=int(doc["version"]),
        )


@dataclass(frozen=True)
class TokenConfig:
    """Chunking of a 1440-minute day into K tokens of L minutes."""

    token_length: int
    n_minutes: int = 1440

    def __post_init__(self):
        if self.token_length <= 0:
            raise ParameterError("token_length must be positive")
        if self.n_minutes % self.token_length != 0:
            raise ShapeError(
                f"token_length {self.token_length} does not divide {self.n_minutes}"
            )

    @property
    def n_tokens(self) -> int:
        return self.n_minutes // self.token_length


def fit_normalizer(training_days, channel_kinds: dict[str, str]) -> NormStats:
    """Fit per-channel statistics over the pooled minutes of all training days.

    channel_kinds maps channel name to "znorm" or "minmax". A channel with
    zero spread cannot be normalized and raises DegenerateChannelError.
    """
    days = list(training_days)
    if not days:
        raise ParameterError("empty training collection")
    names = days[0].channel_names
    pooled = np.concatenate([d.values for d in days], axis=0)

    stats = []
    for j, name in enumerate(names):
        kind = channel_kinds.get(name)
        if kind not in ("znorm", "minmax"):
            raise SchemaError(f"no normalization kind for channel {name!r}")
        col = pooled[:, j]
        if kind == "znorm":
            mean = float(col.mean())
            std = float(col.std())
            if std == 0.0:
                raise DegenerateChannelError(f"channel {name!r} is constant (std=0)")
            stats.append(ChannelStats("znorm", mean, std))
        else:
            lo, hi = float(col.min()), float(col.max())
            if hi == lo:
                raise DegenerateChannelError(f"channel {name!r} is constant (min=max)")
            pad = MINMAX_EPS * (hi - lo)
            stats.append(ChannelStats("minmax", lo - pad, (hi - lo) + 2 * pad))
    return NormStats(channel_names=tuple(names), stats=tuple(stats))


def gaussian_kernel(window: int) -> np.ndarray:
    """Truncated, renormalized Gaussian of ``window`` samples, sigma=window/6."""
    if window < 1 or window % 2 == 0:
        raise ParameterError("window must be odd and >= 1")
    if window == 1:
        return np.ones(1)
    half = window // 2
    sigma = window / 6.0
    x = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_smooth(series: np.ndarray, window: int) -> np.ndarray:
    """Convolve with the truncated Gaussian; edges renormalize over the
    valid support so constants pass through unchanged everywhere."""
    series = np.asarray(series, dtype=np.float64)
    kernel = gaussian_kernel(window)
    if window == 1:
        return series.copy()
    half = window // 2
    num = np.convolve(series, kernel, mode="same")
    # per-index sum of kernel weights that actually overlapped the series
    mass = np.convolve(np.ones_like(series), kernel, mode="same")
    return num / mass


def apply_normalizer(values: np.ndarray, stats: NormStats, channel_names,
                     smooth: set[str] = frozenset(), window: int = 15) -> np.ndarray:
    """Normalize a (T, F) day matrix; smooth the requested minmax channels."""
    names = tuple(channel_names)
    if names != stats.channel_names:
        raise SchemaError(
            f"channel mismatch: data has {names}, stats cover {stats.channel_names}"
        )
    if values.shape[1] != len(names):
        raise SchemaError("value matrix width does not match channel list")

    out = np.empty_like(values, dtype=np.float64)
    for j, (name, st) in enumerate(zip(names, stats.stats)):
        col = (values[:, j] - st.loc) / st.scale
        if name in smooth:
            col = gaussian_smooth(col, window)
        out[:, j] = col
    if not np.all(np.isfinite(out)):
        raise SchemaError("normalized output contains non-finite values")
    return out


def invert_normalizer(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Map normalized values back to raw units (pre-smoothing)."""
    out = np.empty_like(values, dtype=np.float64)
    for j, st in enumerate(stats.stats):
        out[:, j] = values[:, j] * st.scale + st.loc
    return out


def tokenize(matrix: np.ndarray, cfg: TokenConfig) -> np.ndarray:
    """(T, F) -> (K, L*F); token k holds timesteps [kL, (k+1)L) with the
    F channels contiguous within each timestep."""
    t, f = matrix.shape
    if t != cfg.n_minutes:
        raise ShapeError(f"expected {cfg.n_minutes} timesteps, got {t}")
    return matrix.reshape(cfg.n_tokens, cfg.token_length * f)


def detokenize(tokens: np.ndarray, cfg: TokenConfig, n_channels: int) -> np.ndarray:
    """(K, L*F) -> (T, F); exact inverse of tokenize."""
    k, lf = tokens.shape
    if k != cfg.n_tokens or lf != cfg.token_length * n_channels:
        raise ShapeError(
            f"token block {tokens.shape} inconsistent with K={cfg.n_tokens}, "
            f"L={cfg.token_length}, F={n_channels}"
        )
    return tokens.reshape(cfg.n_minutes, n_channels)
