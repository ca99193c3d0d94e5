"""Multi-modal transformer encoder over concatenated expert sequences.

Audio side: each expert's frames are projected to the model width and
tagged with expert-type and temporal-position embeddings; a learned
aggregation token per expert is prepended to its segment. The joined
sequence runs through L pre-norm self-attention blocks, and the final
state at each aggregation token is that expert's audio embedding.
Only unmasked frames enter the sequence, so padding cannot influence
the outputs at all. With L=0 the aggregation states pass through
untouched.

Text side: masked mean over provider token embeddings, then per-expert
gated units and a softmax mixture head, mirroring the other models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .blocks import GatedUnit, Linear, collect, uniform_init
from .moee import TextSide, _stream_rows

LN_EPS = 1e-5


@dataclass
class MmtConfig:
    experts: tuple[str, ...]
    expert_dims: dict[str, int]
    text_dim: int
    model_dim: int = 512
    layers: int = 4
    heads: int = 4
    ff_dim: int = 2048
    max_frames: int = 512

    def __post_init__(self):
        self.experts = tuple(self.experts)
        if not self.experts:
            raise ValueError("expert list is empty")
        if len(set(self.experts)) != len(self.experts):
            raise ValueError("duplicate expert in config")
        missing = [e for e in self.experts if e not in self.expert_dims]
        if missing:
            raise ValueError(f"no dimension recorded for experts: {missing}")
        if self.model_dim % self.heads != 0:
            raise ValueError("model_dim must be divisible by heads")


class _Block:
    """One pre-norm residual block: attention then feed-forward."""

    def __init__(self, dim: int, heads: int, ff_dim: int, rng: np.random.Generator):
        self.dim = dim
        self.heads = heads
        self.ln1_g = ad.parameter(np.ones(dim))
        self.ln1_b = ad.parameter(np.zeros(dim))
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)
        self.ln2_g = ad.parameter(np.ones(dim))
        self.ln2_b = ad.parameter(np.zeros(dim))
        self.ff1 = Linear(dim, ff_dim, rng)
        self.ff2 = Linear(ff_dim, dim, rng)

    def _layernorm(self, x: ad.Tensor, gain: ad.Tensor, bias: ad.Tensor) -> ad.Tensor:
        mean = ad.tmean(x, axis=1, keepdims=True)
        centered = ad.sub(x, mean)
        var = ad.tmean(ad.square(centered), axis=1, keepdims=True)
        normed = ad.div(centered, ad.sqrt(ad.add(var, LN_EPS)))
        return ad.add(ad.mul(normed, gain), bias)

    def _attention(self, x: ad.Tensor, attn_sink: list | None) -> ad.Tensor:
        q = self.wq(x)
        k = self.wk(x)
        v = self.wv(x)
        head_dim = self.dim // self.heads
        scale = 1.0 / np.sqrt(head_dim)
        contexts = []
        for h in range(self.heads):
            cols = slice(h * head_dim, (h + 1) * head_dim)
            qh, kh, vh = q[:, cols], k[:, cols], v[:, cols]
            scores = ad.mul(ad.matmul(qh, ad.transpose(kh)), scale)
            attn = ad.softmax(scores, axis=1)
            if attn_sink is not None:
                attn_sink.append(attn.data.copy())
            contexts.append(ad.matmul(attn, vh))
        return self.wo(ad.concat(contexts, axis=1))

    def __call__(self, x: ad.Tensor, attn_sink: list | None = None) -> ad.Tensor:
        x = ad.add(x, self._attention(self._layernorm(x, self.ln1_g, self.ln1_b),
                                      attn_sink))
        x = ad.add(x, self.ff2(ad.relu(self.ff1(
            self._layernorm(x, self.ln2_g, self.ln2_b)))))
        return x

    def named_parameters(self) -> dict[str, ad.Tensor]:
        params = {"ln1_g": self.ln1_g, "ln1_b": self.ln1_b,
                  "ln2_g": self.ln2_g, "ln2_b": self.ln2_b}
        for name, sub in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv),
                          ("wo", self.wo), ("ff1", self.ff1), ("ff2", self.ff2)):
            for pname, tensor in sub.named_parameters().items():
                params[f"{name}.{pname}"] = tensor
        return params


class MmtModel:
    arch = "mmt"

    def __init__(self, cfg: MmtConfig, rng: np.random.Generator):
        self.cfg = cfg
        d = cfg.model_dim
        self.proj: dict[str, Linear] = {}
        self.type_emb: dict[str, ad.Tensor] = {}
        self.agg: dict[str, ad.Tensor] = {}
        for expert in cfg.experts:
            self.proj[expert] = Linear(cfg.expert_dims[expert], d, rng)
            self.type_emb[expert] = ad.parameter(uniform_init(rng, (d,), d))
            self.agg[expert] = ad.parameter(uniform_init(rng, (d,), d))
        self.pos = ad.parameter(uniform_init(rng, (cfg.max_frames, d), d))
        self.blocks = [_Block(d, cfg.heads, cfg.ff_dim, rng)
                       for _ in range(cfg.layers)]
        self.text_units = {e: GatedUnit(cfg.text_dim, d, rng) for e in cfg.experts}
        self.weight_head = Linear(cfg.text_dim, len(cfg.experts), rng)

    # -- audio side ----------------------------------------------------

    def encode_audio(self, streams, attn_sink: list | None = None
                     ) -> dict[str, ad.Tensor]:
        unknown = [e for e in streams if e not in self.cfg.experts]
        if unknown:
            raise KeyError(f"streams for unconfigured experts: {unknown}")
        segments: list[ad.Tensor] = []
        agg_positions: dict[str, int] = {}
        cursor = 0
        present = [e for e in self.cfg.experts if e in streams]
        if not present:
            raise ValueError("no experts present for this sample")
        for expert in present:
            matrix, mask = _stream_rows(streams[expert])
            if mask is None:
                rows = matrix
            else:
                rows = matrix[np.asarray(mask, dtype=bool)]
            if rows.shape[0] == 0:
                raise ValueError(f"all frames masked for expert {expert}")
            if rows.shape[0] > self.cfg.max_frames:
                raise ValueError(
                    f"{rows.shape[0]} frames exceed the position table "
                    f"({self.cfg.max_frames}); cap the stream first")
            frames = ad.add(ad.add(self.proj[expert](rows),
                                   self.type_emb[expert]),
                            self.pos[: rows.shape[0]])
            agg_positions[expert] = cursor
            segments.append(ad.reshape(self.agg[expert], (1, self.cfg.model_dim)))
            segments.append(frames)
            cursor += 1 + rows.shape[0]
        x = ad.concat(segments, axis=0)
        for block in self.blocks:
            x = block(x, attn_sink)
        return {e: x[agg_positions[e]] for e in present}

    # -- text side -----------------------------------------------------

    def encode_text(self, tokens, mask: np.ndarray | None = None) -> TextSide:
        tokens = np.asarray(tokens, dtype=np.float64)
        if mask is None:
            mask = np.ones(tokens.shape[0], dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        valid = np.flatnonzero(mask)
        if valid.size == 0:
            pooled = ad.Tensor(np.zeros(tokens.shape[1]))
        else:
            pooled = ad.tmean(ad.Tensor(tokens[valid]), axis=0)
        vectors = {e: self.text_units[e](pooled) for e in self.cfg.experts}
        weights = ad.softmax(self.weight_head(pooled))
        return TextSide(vectors, weights)

    # -- parameters ----------------------------------------------------

    def named_parameters(self) -> dict[str, ad.Tensor]:
        params: dict[str, ad.Tensor] = {}
        for expert in self.cfg.experts:
            params.update(collect(f"proj.{expert}", self.proj[expert]))
            params[f"type_emb.{expert}"] = self.type_emb[expert]
            params[f"agg.{expert}"] = self.agg[expert]
        params["pos"] = self.pos
        for i, block in enumerate(self.blocks):
            for name, tensor in block.named_parameters().items():
                params[f"block.{i}.{name}"] = tensor
        for expert in self.cfg.experts:
            params.update(collect(f"text_unit.{expert}", self.text_units[expert]))
        params.update(collect("weight_head", self.weight_head))
        return params

    def config_dict(self) -> dict:
        return {
            "experts": list(self.cfg.experts),
            "expert_dims": {e: int(self.cfg.expert_dims[e]) for e in self.cfg.experts},
            "text_dim": self.cfg.text_dim,
            "model_dim": self.cfg.model_dim,
            "layers": self.cfg.layers,
            "heads": self.cfg.heads,
            "ff_dim": self.cfg.ff_dim,
            "max_frames": self.cfg.max_frames,
        }
