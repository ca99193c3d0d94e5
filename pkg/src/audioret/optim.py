"""First-order optimizers over named parameter tensors.

All state is per-parameter numpy float64, keyed by parameter name, so a
training run is bit-reproducible given the same gradient sequence. The
rectified scheme follows the variance-rectification rule (warmup-free
adaptive moments that fall back to momentum SGD while the variance
estimate is untrustworthy); the slow/fast weight wrapper interpolates
toward the exploring inner optimizer every k steps.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


class Adam:
    """Adaptive moments with bias correction; optional L2 term in the grad."""

    def __init__(self, params: dict[str, ad.Tensor], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = (float(b) for b in betas)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _gradient(self, name: str, p: ad.Tensor) -> np.ndarray:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if self.weight_decay:
            g = g + self.weight_decay * p.data
        return g

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = self._gradient(name, p)
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            mhat = self.m[name] / (1.0 - b1 ** self.t)
            vhat = self.v[name] / (1.0 - b2 ** self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class RAdam(Adam):
    """Rectified adaptive moments: variance-aware trust ratio with an
    un-adapted momentum fallback for the first few steps."""

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        rho_inf = 2.0 / (1.0 - b2) - 1.0
        bias2 = 1.0 - b2 ** self.t
        rho_t = rho_inf - 2.0 * self.t * b2 ** self.t / bias2
        if rho_t > 4.0:
            rect = np.sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                           / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
        else:
            rect = None
        for name, p in self.params.items():
            g = self._gradient(name, p)
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            mhat = self.m[name] / (1.0 - b1 ** self.t)
            if rect is None:
                p.data -= self.lr * mhat
            else:
                vhat = np.sqrt(self.v[name] / bias2)
                p.data -= self.lr * rect * mhat / (vhat + self.eps)


class Lookahead:
    """Slow/fast weight wrapper: every k inner steps the slow weights move
    a fraction alpha toward the fast ones, and the fast weights reset."""

    def __init__(self, inner, k: int = 5, alpha: float = 0.5):
        if k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        self.inner = inner
        self.k = int(k)
        self.alpha = float(alpha)
        self.t = 0
        self.slow = {name: p.data.copy() for name, p in inner.params.items()}

    @property
    def lr(self) -> float:
        return self.inner.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.inner.lr = value

    @property
    def params(self) -> dict[str, ad.Tensor]:
        return self.inner.params

    def zero_grad(self) -> None:
        self.inner.zero_grad()

    def step(self) -> None:
        self.inner.step()
        self.t += 1
        if self.t % self.k == 0:
            for name, p in self.inner.params.items():
                self.slow[name] += self.alpha * (p.data - self.slow[name])
                p.data[...] = self.slow[name]


def build_optimizer(kind: str, params: dict[str, ad.Tensor], lr: float,
                    weight_decay: float = 0.0, lookahead_k: int = 5,
                    lookahead_alpha: float = 0.5):
    """Construct one of the supported update rules by name."""
    if kind == "adam":
        return Adam(params, lr=lr, weight_decay=weight_decay)
    if kind == "radam":
        return RAdam(params, lr=lr, weight_decay=weight_decay)
    if kind == "lookahead_radam":
        return Lookahead(RAdam(params, lr=lr, weight_decay=weight_decay),
                         k=lookahead_k, alpha=lookahead_alpha)
    raise ValueError(f"unknown optimizer {kind!r}")
