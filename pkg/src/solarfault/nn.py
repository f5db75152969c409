"""Differentiable building blocks for the day-trace autoencoder.

Tensors are torch tensors; gradients come from autograd, and every loss
used in training is validated against central finite differences by
``grad_check``. float64 is used for gradient checks, float32 elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import OptimizerError, ParameterError, ShapeError


def linear_forward(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """y = x W + b with an explicit inner-dimension check."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"inner dims disagree: x {tuple(x.shape)} vs W {tuple(weight.shape)}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"bias shape {tuple(bias.shape)} vs W {tuple(weight.shape)}")
    return x @ weight + bias


@dataclass
class LstmLayerParams:
    """One stacked-LSTM layer; gate order in the fused matrices is i, f, g, o."""

    w_ih: torch.Tensor  # (input_dim, 4*hidden)
    w_hh: torch.Tensor  # (hidden, 4*hidden)
    bias: torch.Tensor  # (4*hidden,)

    @property
    def hidden_dim(self) -> int:
        return self.w_hh.shape[0]

    def tensors(self):
        return [self.w_ih, self.w_hh, self.bias]


def init_linear(in_dim: int, out_dim: int, generator: torch.Generator,
                dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    bound = 1.0 / math.sqrt(in_dim)
    w = (torch.rand(in_dim, out_dim, generator=generator, dtype=dtype) * 2 - 1) * bound
    b = torch.zeros(out_dim, dtype=dtype)
    return w, b


def init_lstm_layer(input_dim: int, hidden_dim: int, generator: torch.Generator,
                    dtype=torch.float32) -> LstmLayerParams:
    """Uniform ±1/sqrt(fan_in) weights; forget-gate bias starts at +1."""
    bound = 1.0 / math.sqrt(input_dim)
    w_ih = (torch.rand(input_dim, 4 * hidden_dim, generator=generator, dtype=dtype) * 2 - 1) * bound
    bound_h = 1.0 / math.sqrt(hidden_dim)
    w_hh = (torch.rand(hidden_dim, 4 * hidden_dim, generator=generator, dtype=dtype) * 2 - 1) * bound_h
    bias = torch.zeros(4 * hidden_dim, dtype=dtype)
    bias[hidden_dim:2 * hidden_dim] = 1.0
    return LstmLayerParams(w_ih=w_ih, w_hh=w_hh, bias=bias)


def lstm_step(x_t: torch.Tensor, h_prev: torch.Tensor, c_prev: torch.Tensor,
              params: LstmLayerParams) -> tuple[torch.Tensor, torch.Tensor]:
    """Standard gated update: c' = f*c + i*g, h' = o*tanh(c')."""
    h = params.hidden_dim
    if x_t.shape[-1] != params.w_ih.shape[0]:
        raise ShapeError(f"input width {x_t.shape[-1]} vs w_ih {tuple(params.w_ih.shape)}")
    if h_prev.shape[-1] != h or c_prev.shape[-1] != h:
        raise ShapeError("state widths do not match hidden_dim")
    gates = x_t @ params.w_ih + h_prev @ params.w_hh + params.bias
    i, f, g, o = gates.split(h, dim=-1)
    i = torch.sigmoid(i)
    f = torch.sigmoid(f)
    g = torch.tanh(g)
    o = torch.sigmoid(o)
    c_next = f * c_prev + i * g
    h_next = o * torch.tanh(c_next)
    return h_next, c_next


def lstm_forward(x: torch.Tensor, layers: list[LstmLayerParams],
                 dropout_rate: float = 0.0, generator: torch.Generator | None = None,
                 training: bool = False) -> torch.Tensor:
    """Run a (B, K, D_in) sequence through stacked LSTM layers.

    Dropout sits between layers only, never on recurrent connections.
    Returns the top layer's hidden sequence (B, K, H).
    """
    b, k, _ = x.shape
    seq = x
    for li, layer in enumerate(layers):
        h = torch.zeros(b, layer.hidden_dim, dtype=x.dtype)
        c = torch.zeros(b, layer.hidden_dim, dtype=x.dtype)
        outs = []
        for t in range(k):
            h, c = lstm_step(seq[:, t, :], h, c, layer)
            outs.append(h)
        seq = torch.stack(outs, dim=1)
        if li + 1 < len(layers) and dropout_rate > 0:
            seq = dropout(seq, dropout_rate, generator, training)
    return seq


def dropout(x: torch.Tensor, rate: float, generator: torch.Generator | None,
            training: bool) -> torch.Tensor:
    """Inverted dropout; identity at inference or rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (torch.rand(x.shape, generator=generator, dtype=x.dtype) >= rate).to(x.dtype)
    return x * keep / (1.0 - rate)


class Adam:
    """Adam with bias correction; aborts on non-finite gradients."""

    def __init__(self, params: list[torch.Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [torch.zeros_like(p) for p in params]
        self.v = [torch.zeros_like(p) for p in params]

    @torch.no_grad()
    def step(self):
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not torch.isfinite(g).all():
                raise OptimizerError(f"non-finite gradient at step {t} (param {i})")
            self.m[i].mul_(self.beta1).add_(g, alpha=1 - self.beta1)
            self.v[i].mul_(self.beta2).addcmul_(g, g, value=1 - self.beta2)
            m_hat = self.m[i] / (1 - self.beta1 ** t)
            v_hat = self.v[i] / (1 - self.beta2 ** t)
            p.add_(-self.lr * m_hat / (v_hat.sqrt() + self.eps))

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def adam_update(params, grads, state: Adam) -> None:
    """Functional entry point: assign grads, then take one Adam step."""
    if len(params) != len(grads):
        raise ShapeError("params and grads must pair up")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"grad shape {tuple(g.shape)} vs param {tuple(p.shape)}")
        p.grad = g
    state.step()


def grad_check(fn, params: list[torch.Tensor], n_probes: int = 20,
               step: float = 1e-5, seed: int = 0) -> float:
    """Max relative error of autograd vs central finite differences.

    ``fn()`` must return a scalar and be deterministic; params are probed
    at ``n_probes`` random coordinates each. Run in float64.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss = fn()
    loss.backward()
    analytic = [p.grad.clone() if p.grad is not None else torch.zeros_like(p) for p in params]

    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            flat = p.reshape(-1)
            n = flat.numel()
            idxs = rng.choice(n, size=min(n_probes, n), replace=False)
            for idx in idxs:
                orig = flat[idx].item()
                flat[idx] = orig + step
                f_plus = fn().item()
                flat[idx] = orig - step
                f_minus = fn().item()
                flat[idx] = orig
                numeric = (f_plus - f_minus) / (2 * step)
                a = g.reshape(-1)[idx].item()
                denom = max(abs(a), abs(numeric), 1.0)
                worst = max(worst, abs(a - numeric) / denom)
    return worst
