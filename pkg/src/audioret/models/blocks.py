"""Shared encoder blocks: soft-assignment pooling and gated projections.

All blocks build autodiff graphs over float64 Tensors and expose their
trainable leaves through named_parameters().
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad

EPS = 1e-12


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                 fan_in: int) -> np.ndarray:
    """Symmetric uniform draw scaled by 1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    """y = x W^T + b for row vectors; accepts 1-D or row-major 2-D input."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = ad.parameter(uniform_init(rng, (out_dim, in_dim), in_dim))
        self.b = ad.parameter(np.zeros(out_dim))

    def __call__(self, x) -> ad.Tensor:
        x = ad.as_tensor(x)
        if x.ndim == 1:
            return ad.add(ad.matmul(self.w, x), self.b)
        return ad.add(ad.matmul(x, ad.transpose(self.w)), self.b)

    def named_parameters(self) -> dict[str, ad.Tensor]:
        return {"w": self.w, "b": self.b}


class NetVlad:
    """Soft-assignment pooling with optional ghost clusters.

    Frames are soft-assigned over K+G clusters by a softmax of linear
    scores; residuals against the first K centers are accumulated,
    intra-normalized per cluster, flattened, and globally L2-normalized.
    Ghost clusters take part in the assignment softmax only.

    Valid frames are lexicographically sorted before any arithmetic, so
    the output is bit-identical under frame permutation and padding.
    """

    def __init__(self, input_dim: int, clusters: int, ghost: int,
                 rng: np.random.Generator):
        if clusters < 1 or ghost < 0:
            raise ValueError("need clusters >= 1 and ghost >= 0")
        self.input_dim = input_dim
        self.clusters = clusters
        self.ghost = ghost
        total = clusters + ghost
        self.centers = ad.parameter(uniform_init(rng, (total, input_dim), input_dim))
        self.assign_w = ad.parameter(uniform_init(rng, (input_dim, total), input_dim))
        self.assign_b = ad.parameter(np.zeros(total))

    @property
    def output_dim(self) -> int:
        return self.clusters * self.input_dim

    def __call__(self, frames, mask: np.ndarray | None = None) -> ad.Tensor:
        frames = ad.as_tensor(frames)
        if frames.ndim != 2 or frames.shape[1] != self.input_dim:
            raise ValueError(
                f"expected frames of width {self.input_dim}, got {frames.shape}")
        if mask is None:
            valid = np.arange(frames.shape[0])
        else:
            valid = np.flatnonzero(np.asarray(mask, dtype=bool))
        if valid.size == 0:
            raise ValueError("all frames masked: nothing to aggregate")
        # canonical frame order makes the pooled descriptor exactly
        # order-free, not just order-free up to float round-off
        rows = frames.data[valid]
        order = valid[np.lexsort(rows.T[::-1])]
        x = ad.take_rows(frames, order)

        logits = ad.add(ad.matmul(x, self.assign_w), self.assign_b)
        assign = ad.softmax(logits, axis=1)[:, : self.clusters]
        mass = ad.tsum(assign, axis=0)  # per-cluster assignment mass
        centers = self.centers[: self.clusters]
        vlad = ad.sub(ad.matmul(ad.transpose(assign), x),
                      ad.mul(ad.reshape(mass, (self.clusters, 1)), centers))
        vlad = ad.row_normalize(vlad, eps=EPS)
        flat = ad.reshape(vlad, (self.output_dim,))
        return ad.l2_normalize(flat, eps=EPS)

    def named_parameters(self) -> dict[str, ad.Tensor]:
        return {"centers": self.centers, "assign_w": self.assign_w,
                "assign_b": self.assign_b}


class GatedUnit:
    """Self-gated linear map with L2-normalized output.

    y1 = W1 x + b1;  y = y1 * sigmoid(W2 y1 + b2);  output y / max(|y|, eps).
    """

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w1 = ad.parameter(uniform_init(rng, (out_dim, in_dim), in_dim))
        self.b1 = ad.parameter(np.zeros(out_dim))
        self.w2 = ad.parameter(uniform_init(rng, (out_dim, out_dim), out_dim))
        self.b2 = ad.parameter(np.zeros(out_dim))

    def __call__(self, x) -> ad.Tensor:
        y1 = ad.add(ad.matmul(self.w1, ad.as_tensor(x)), self.b1)
        gate = ad.sigmoid(ad.add(ad.matmul(self.w2, y1), self.b2))
        return ad.l2_normalize(ad.mul(y1, gate), eps=EPS)

    def named_parameters(self) -> dict[str, ad.Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def collect(prefix: str, block) -> dict[str, ad.Tensor]:
    """Flatten a block's named parameters under a dotted prefix."""
    return {f"{prefix}.{name}": tensor
            for name, tensor in block.named_parameters().items()}
