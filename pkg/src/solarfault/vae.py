"""LSTM-based variational autoencoder with a per-timestep Gaussian output.

A day is tokenized into K chunks of L minutes, linearly embedded, and
run through a stacked LSTM encoder that parameterizes K independent
D-dimensional Gaussian latents. The decoder mirrors this and emits a
mean and variance per timestep and channel. Training minimizes the
variance-weighted reconstruction likelihood plus a KL penalty against
the unit Gaussian prior; anomaly scoring always uses the plain NLL.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch

from . import nn
from .checkpoint import read_checkpoint, write_checkpoint
from .errors import ParameterError, ShapeError, TrainingError
from .preprocess import NormStats, TokenConfig, apply_normalizer, tokenize

VAR_FLOOR = 1e-6
LOG_INTERVAL = 500
HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 0.01
    beta_nll: float = 0.5
    learning_rate: float = 1e-4
    num_layers: int = 4
    hidden_dim: int = 64
    latent_dim: int = 8
    dropout: float = 0.1
    token_length: int = 30
    update_steps: int = 40_000
    batch_size: int = 64
    seed: int = 0
    n_channels: int = 8
    heteroscedastic: bool = True

    def __post_init__(self):
        if self.beta < 0:
            raise ParameterError("beta must be >= 0")
        if not 0.0 <= self.beta_nll <= 1.0:
            raise ParameterError("beta_nll must be in [0, 1]")
        for name in ("num_layers", "hidden_dim", "latent_dim", "token_length",
                     "update_steps", "batch_size", "n_channels"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")

    @property
    def token_config(self) -> TokenConfig:
        return TokenConfig(token_length=self.token_length)


@dataclass
class GaussianField:
    """Per-timestep, per-channel predicted mean and variance (T, F)."""

    mu: np.ndarray
    var: np.ndarray


def positive_var(raw: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.softplus(raw) + VAR_FLOOR


class VaeModel:
    """Holds all learned tensors plus the config and normalizer stats."""

    def __init__(self, cfg: TrainConfig, norm_stats: NormStats | None = None,
                 smooth_channels: tuple[str, ...] = (), generator: torch.Generator | None = None,
                 dtype=torch.float32):
        self.cfg = cfg
        self.norm_stats = norm_stats
        self.smooth_channels = tuple(smooth_channels)
        self.error_scaler = None  # set for homoscedastic models after training
        if generator is None:
            generator = torch.Generator().manual_seed(cfg.seed)
        lf = cfg.token_length * cfg.n_channels
        e, d = cfg.hidden_dim, cfg.latent_dim
        out_width = lf * 2 if cfg.heteroscedastic else lf

        self.enc_embed_w, self.enc_embed_b = nn.init_linear(lf, e, generator, dtype)
        self.enc_lstm = [nn.init_lstm_layer(e, e, generator, dtype) for _ in range(cfg.num_layers)]
        self.enc_head_w, self.enc_head_b = nn.init_linear(e, 2 * d, generator, dtype)
        self.dec_in_w, self.dec_in_b = nn.init_linear(d, e, generator, dtype)
        self.dec_lstm = [nn.init_lstm_layer(e, e, generator, dtype) for _ in range(cfg.num_layers)]
        self.dec_mlp_hidden_w, self.dec_mlp_hidden_b = nn.init_linear(e, e, generator, dtype)
        self.dec_mlp_out_w, self.dec_mlp_out_b = nn.init_linear(e, out_width, generator, dtype)

    def named_tensors(self) -> dict[str, torch.Tensor]:
        out = {
            "enc.embed.w": self.enc_embed_w, "enc.embed.b": self.enc_embed_b,
            "enc.head.w": self.enc_head_w, "enc.head.b": self.enc_head_b,
            "dec.in.w": self.dec_in_w, "dec.in.b": self.dec_in_b,
            "dec.mlp_hidden.w": self.dec_mlp_hidden_w, "dec.mlp_hidden.b": self.dec_mlp_hidden_b,
            "dec.mlp_out.w": self.dec_mlp_out_w, "dec.mlp_out.b": self.dec_mlp_out_b,
        }
        for prefix, layers in (("enc.lstm", self.enc_lstm), ("dec.lstm", self.dec_lstm)):
            for i, layer in enumerate(layers):
                out[f"{prefix}.{i}.w_ih"] = layer.w_ih
                out[f"{prefix}.{i}.w_hh"] = layer.w_hh
                out[f"{prefix}.{i}.bias"] = layer.bias
        return out

    def parameters(self) -> list[torch.Tensor]:
        return list(self.named_tensors().values())

    def requires_grad_(self, flag: bool = True):
        for p in self.parameters():
            p.requires_grad_(flag)
        return self

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.detach().numpy().copy() for k, v in self.named_tensors().items()}

    def load_snapshot(self, arrays: dict[str, np.ndarray]):
        with torch.no_grad():
            for name, tensor in self.named_tensors().items():
                src = torch.from_numpy(np.asarray(arrays[name])).to(tensor.dtype)
                if src.shape != tensor.shape:
                    raise ShapeError(f"parameter {name}: {tuple(src.shape)} vs {tuple(tensor.shape)}")
                tensor.copy_(src)


def encode(tokens: torch.Tensor, model: VaeModel, generator=None, training=False):
    """(B, K, L*F) -> latent mu, var of shape (B, K, D)."""
    cfg = model.cfg
    h = nn.linear_forward(tokens, model.enc_embed_w, model.enc_embed_b)
    h = nn.lstm_forward(h, model.enc_lstm, cfg.dropout, generator, training)
    head = nn.linear_forward(h, model.enc_head_w, model.enc_head_b)
    mu, raw_var = head.split(cfg.latent_dim, dim=-1)
    return mu, positive_var(raw_var)


def reparam_sample(mu: torch.Tensor, var: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    return mu + torch.sqrt(var) * noise


def decode(z: torch.Tensor, model: VaeModel, generator=None, training=False):
    """(B, K, D) -> per-timestep mu, var of shape (B, T, F)."""
    cfg = model.cfg
    lf = cfg.token_length * cfg.n_channels
    h = nn.linear_forward(z, model.dec_in_w, model.dec_in_b)
    h = nn.lstm_forward(h, model.dec_lstm, cfg.dropout, generator, training)
    h = torch.tanh(nn.linear_forward(h, model.dec_mlp_hidden_w, model.dec_mlp_hidden_b))
    out = nn.linear_forward(h, model.dec_mlp_out_w, model.dec_mlp_out_b)
    b = z.shape[0]
    t = cfg.token_config.n_minutes
    if cfg.heteroscedastic:
        mu_tok, raw_var_tok = out.split(lf, dim=-1)
        mu = mu_tok.reshape(b, t, cfg.n_channels)
        var = positive_var(raw_var_tok).reshape(b, t, cfg.n_channels)
    else:
        mu = out.reshape(b, t, cfg.n_channels)
        var = torch.ones_like(mu)
    return mu, var


def kl_divergence(mu: torch.Tensor, var: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, var) || N(0, I)) summed over tokens and latent dims,
    averaged over the batch."""
    per_sample = 0.5 * (mu ** 2 + var - torch.log(var) - 1.0).sum(dim=(-2, -1))
    return per_sample.mean()


def gaussian_nll(x: torch.Tensor, mu: torch.Tensor, var: torch.Tensor) -> torch.Tensor:
    """Per-entry negative log-likelihood, constant included."""
    return 0.5 * (torch.log(var) + (x - mu) ** 2 / var) + HALF_LOG_2PI


def bnll_loss(x: torch.Tensor, mu: torch.Tensor, var: torch.Tensor,
              beta_nll: float) -> torch.Tensor:
    """Mean NLL with each entry weighted by var**beta_nll, the weight
    detached so no gradient flows through it. beta_nll=0 is plain NLL."""
    if not 0.0 <= beta_nll <= 1.0:
        raise ParameterError("beta_nll must be in [0, 1]")
    nll = gaussian_nll(x, mu, var)
    if beta_nll == 0.0:
        return nll.mean()
    weight = (var ** beta_nll).detach()
    return (weight * nll).mean()


def vae_loss(x: torch.Tensor, tokens: torch.Tensor, model: VaeModel,
             noise: torch.Tensor, generator=None, training=False):
    """Returns (total, recon_term, kl_term). Homoscedastic models train
    on plain MSE instead of the weighted NLL."""
    cfg = model.cfg
    mu_z, var_z = encode(tokens, model, generator, training)
    z = reparam_sample(mu_z, var_z, noise)
    mu_x, var_x = decode(z, model, generator, training)
    if cfg.heteroscedastic:
        recon = bnll_loss(x, mu_x, var_x, cfg.beta_nll)
    else:
        recon = ((x - mu_x) ** 2).mean()
    kl = kl_divergence(mu_z, var_z)
    total = recon + cfg.beta * kl
    return total, recon, kl


def prepare_days(days, norm_stats: NormStats, smooth_channels, cfg: TrainConfig,
                 dtype=torch.float32):
    """Normalize and tokenize a day collection into stacked tensors.

    Returns (x (N, T, F), tokens (N, K, L*F)).
    """
    tok_cfg = cfg.token_config
    mats, toks = [], []
    smooth = set(smooth_channels)
    for day in days:
        m = apply_normalizer(day.values, norm_stats, day.channel_names, smooth)
        mats.append(m)
        toks.append(tokenize(m, tok_cfg))
    x = torch.from_numpy(np.stack(mats)).to(dtype)
    tokens = torch.from_numpy(np.stack(toks)).to(dtype)
    return x, tokens


def train(train_days, val_days, cfg: TrainConfig, norm_stats: NormStats,
          smooth_channels=(), log_path=None) -> VaeModel:
    """Run cfg.update_steps Adam steps over uniformly sampled day batches.

    Training and validation losses are logged every 500 steps. A
    non-finite loss aborts with TrainingError carrying the last model
    state that produced a finite loss (``exc.last_good``).
    """
    if not train_days:
        raise ParameterError("empty training set")
    model = VaeModel(cfg, norm_stats, smooth_channels).requires_grad_()
    x_train, tok_train = prepare_days(train_days, norm_stats, smooth_channels, cfg)
    x_val, tok_val = (None, None)
    if val_days:
        x_val, tok_val = prepare_days(val_days, norm_stats, smooth_channels, cfg)

    batch_rng = np.random.default_rng(cfg.seed)
    torch_gen = torch.Generator().manual_seed(cfg.seed + 1)
    opt = nn.Adam(model.parameters(), lr=cfg.learning_rate)
    n = x_train.shape[0]
    k, d = cfg.token_config.n_tokens, cfg.latent_dim

    log_rows = []
    last_good = model.snapshot()

    def val_total():
        if x_val is None:
            return float("nan")
        with torch.no_grad():
            zero = torch.zeros(x_val.shape[0], k, d)
            total, _, _ = vae_loss(x_val, tok_val, model, zero, training=False)
        return float(total)

    for step in range(1, cfg.update_steps + 1):
        idx = batch_rng.integers(0, n, size=cfg.batch_size)
        xb, tb = x_train[idx], tok_train[idx]
        noise = torch.randn(xb.shape[0], k, d, generator=torch_gen)
        opt.zero_grad()
        total, recon, kl = vae_loss(xb, tb, model, noise, torch_gen, training=True)
        if not torch.isfinite(total):
            exc = TrainingError(f"non-finite loss at step {step}")
            exc.last_good = last_good
            exc.log_rows = log_rows
            raise exc
        total.backward()
        opt.step()
        if step % LOG_INTERVAL == 0 or step == cfg.update_steps:
            log_rows.append((step, float(total.detach()), float(recon.detach()),
                             float(kl.detach()), val_total()))
            last_good = model.snapshot()

    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "train_total", "train_recon", "train_kl", "val_total"])
            writer.writerows(log_rows)
    model.log_rows = log_rows
    return model


def reconstruct(day, model: VaeModel, mode: str = "posterior-mean",
                n_samples: int = 1, seed: int = 0) -> GaussianField:
    """Probabilistic reconstruction of one day in normalized space.

    ``posterior-mean`` decodes z = mu and is deterministic; ``sampled``
    averages the decoded mean and variance over n_samples latent draws.
    """
    x = normalized_values(day, model)
    tokens = torch.from_numpy(tokenize(x, model.cfg.token_config)).to(torch.float32)[None]
    with torch.no_grad():
        mu_z, var_z = encode(tokens, model, training=False)
        if mode == "posterior-mean":
            mu_x, var_x = decode(mu_z, model, training=False)
        elif mode == "sampled":
            gen = torch.Generator().manual_seed(seed)
            mus, vars_ = [], []
            for _ in range(n_samples):
                noise = torch.randn(mu_z.shape, generator=gen)
                z = reparam_sample(mu_z, var_z, noise)
                m, v = decode(z, model, training=False)
                mus.append(m)
                vars_.append(v)
            mu_x = torch.stack(mus).mean(dim=0)
            var_x = torch.stack(vars_).mean(dim=0)
        else:
            raise ParameterError(f"unknown reconstruction mode {mode!r}")
    return GaussianField(mu=mu_x[0].numpy().astype(np.float64),
                         var=var_x[0].numpy().astype(np.float64))


def normalized_values(day, model: VaeModel) -> np.ndarray:
    if model.norm_stats is None:
        raise ParameterError("model has no embedded normalizer statistics")
    return apply_normalizer(day.values, model.norm_stats, day.channel_names,
                            set(model.smooth_channels))


def save_vae_checkpoint(path, model: VaeModel) -> None:
    header = {
        "config": asdict(model.cfg),
        "norm_stats": model.norm_stats.to_json() if model.norm_stats else None,
        "smooth_channels": list(model.smooth_channels),
        "has_error_scaler": model.error_scaler is not None,
    }
    arrays = dict(model.snapshot())
    if model.error_scaler is not None:
        header["error_scaler_kind"] = model.error_scaler.kind
        arrays["scaler.loc"] = model.error_scaler.loc
        arrays["scaler.scale"] = model.error_scaler.scale
    write_checkpoint(path, "VAE0", header, arrays)


def load_vae_checkpoint(path) -> VaeModel:
    from .pca import ErrorScaler  # local import to avoid a cycle

    _, header, arrays = read_checkpoint(path, expected_tag="VAE0")
    cfg = TrainConfig(**header["config"])
    norm_stats = NormStats.from_json(header["norm_stats"]) if header["norm_stats"] else None
    model = VaeModel(cfg, norm_stats, tuple(header["smooth_channels"]))
    model.load_snapshot(arrays)
    if header.get("has_error_scaler"):
        model.error_scaler = ErrorScaler(
            kind=header["error_scaler_kind"],
            loc=arrays["scaler.loc"].astype(np.float64),
            scale=arrays["scaler.scale"].astype(np.float64),
        )
    return model
