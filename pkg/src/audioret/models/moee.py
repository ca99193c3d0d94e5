"""Mixture-of-embedding-experts model.

Text: word vectors -> NetVLAD -> one gated unit per expert, plus a
linear head whose softmax gives the expert mixture weights.
Audio: per expert, NetVLAD over the feature stream -> gated unit.
Score: weighted sum of per-expert cosines, weights renormalized over
the experts present for the audio sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .blocks import GatedUnit, Linear, NetVlad, collect


@dataclass
class MoeeConfig:
    experts: tuple[str, ...]
    expert_dims: dict[str, int]
    word_dim: int
    text_clusters: int = 20
    text_ghost: int = 1
    audio_clusters: int = 16
    audio_ghost: int = 0
    joint_dim: int = 512

    def __post_init__(self):
        self.experts = tuple(self.experts)
        if not self.experts:
            raise ValueError("expert list is empty")
        if len(set(self.experts)) != len(self.experts):
            raise ValueError("duplicate expert in config")
        missing = [e for e in self.experts if e not in self.expert_dims]
        if missing:
            raise ValueError(f"no dimension recorded for experts: {missing}")


@dataclass
class TextSide:
    """One caption's encoding: per-expert unit vectors + mixture weights."""

    vectors: dict[str, ad.Tensor]
    weights: ad.Tensor  # (n_experts,), softmax over the configured order


def _stream_rows(value):
    """Accept a bare T x D matrix or a (matrix, mask) pair."""
    if isinstance(value, tuple):
        matrix, mask = value
        return np.asarray(matrix, dtype=np.float64), mask
    return np.asarray(value, dtype=np.float64), None


class MoeeModel:
    arch = "moee"

    def __init__(self, cfg: MoeeConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.text_vlad = NetVlad(cfg.word_dim, cfg.text_clusters, cfg.text_ghost, rng)
        text_dim = self.text_vlad.output_dim
        self.audio_vlad: dict[str, NetVlad] = {}
        self.text_units: dict[str, GatedUnit] = {}
        self.audio_units: dict[str, GatedUnit] = {}
        for expert in cfg.experts:
            self.audio_vlad[expert] = NetVlad(
                cfg.expert_dims[expert], cfg.audio_clusters, cfg.audio_ghost, rng)
            self.text_units[expert] = GatedUnit(text_dim, cfg.joint_dim, rng)
            self.audio_units[expert] = GatedUnit(
                self.audio_vlad[expert].output_dim, cfg.joint_dim, rng)
        self.weight_head = Linear(text_dim, len(cfg.experts), rng)

    # -- encoding ------------------------------------------------------

    def encode_text(self, tokens, mask: np.ndarray | None = None) -> TextSide:
        if mask is not None and not np.asarray(mask, dtype=bool).any():
            mask = None  # all-OOV fallback: aggregate the zero row itself
        pooled = self.text_vlad(tokens, mask)
        vectors = {e: self.text_units[e](pooled) for e in self.cfg.experts}
        weights = ad.softmax(self.weight_head(pooled))
        return TextSide(vectors, weights)

    def encode_audio(self, streams) -> dict[str, ad.Tensor]:
        unknown = [e for e in streams if e not in self.cfg.experts]
        if unknown:
            raise KeyError(f"streams for unconfigured experts: {unknown}")
        vectors: dict[str, ad.Tensor] = {}
        for expert in self.cfg.experts:
            if expert not in streams:
                continue
            matrix, mask = _stream_rows(streams[expert])
            pooled = self.audio_vlad[expert](matrix, mask)
            vectors[expert] = self.audio_units[expert](pooled)
        if not vectors:
            raise ValueError("no experts present for this sample")
        return vectors

    # -- parameters ----------------------------------------------------

    def named_parameters(self) -> dict[str, ad.Tensor]:
        params = collect("text_vlad", self.text_vlad)
        for expert in self.cfg.experts:
            params.update(collect(f"audio_vlad.{expert}", self.audio_vlad[expert]))
            params.update(collect(f"text_unit.{expert}", self.text_units[expert]))
            params.update(collect(f"audio_unit.{expert}", self.audio_units[expert]))
        params.update(collect("weight_head", self.weight_head))
        return params

    def config_dict(self) -> dict:
        return {
            "experts": list(self.cfg.experts),
            "expert_dims": {e: int(self.cfg.expert_dims[e]) for e in self.cfg.experts},
            "word_dim": self.cfg.word_dim,
            "text_clusters": self.cfg.text_clusters,
            "text_ghost": self.cfg.text_ghost,
            "audio_clusters": self.cfg.audio_clusters,
            "audio_ghost": self.cfg.audio_ghost,
            "joint_dim": self.cfg.joint_dim,
        }
