"""Collaborative-experts model: MoEE plus pairwise expert gating.

Before the audio gated units, each expert's pooled descriptor is
modulated by an elementwise (0,1) mask computed from all ordered pairs
of present experts: pairs are projected into a shared width, combined
by a two-layer MLP, summed, and projected back per expert through a
sigmoid. A single present expert is combined with itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .blocks import Linear, collect
from .moee import MoeeConfig, MoeeModel, _stream_rows


@dataclass
class CeConfig(MoeeConfig):
    gate_width: int = 128


class CeModel(MoeeModel):
    arch = "ce"

    def __init__(self, cfg: CeConfig, rng: np.random.Generator):
        super().__init__(cfg, rng)
        width = cfg.gate_width
        self.gate_in: dict[str, Linear] = {}
        self.gate_out: dict[str, Linear] = {}
        for expert in cfg.experts:
            vlad_dim = self.audio_vlad[expert].output_dim
            self.gate_in[expert] = Linear(vlad_dim, width, rng)
            self.gate_out[expert] = Linear(width, vlad_dim, rng)
        self.pair_fc1 = Linear(2 * width, width, rng)
        self.pair_fc2 = Linear(width, width, rng)

    def collaborative_gate(self, expert_vectors: dict[str, ad.Tensor]
                           ) -> dict[str, ad.Tensor]:
        """Mask and modulate each expert vector using pairwise context."""
        if not expert_vectors:
            raise ValueError("no expert vectors to gate")
        present = [e for e in self.cfg.experts if e in expert_vectors]
        projected = {e: self.gate_in[e](expert_vectors[e]) for e in present}
        gated: dict[str, ad.Tensor] = {}
        for e in present:
            partners = [p for p in present if p != e] or [e]  # self-pair fallback
            message = None
            for partner in partners:
                pair = ad.concat([projected[e], projected[partner]])
                term = self.pair_fc2(ad.relu(self.pair_fc1(pair)))
                message = term if message is None else ad.add(message, term)
            mask = ad.sigmoid(self.gate_out[e](message))
            gated[e] = ad.mul(expert_vectors[e], mask)
        return gated

    def encode_audio(self, streams) -> dict[str, ad.Tensor]:
        unknown = [e for e in streams if e not in self.cfg.experts]
        if unknown:
            raise KeyError(f"streams for unconfigured experts: {unknown}")
        pooled: dict[str, ad.Tensor] = {}
        for expert in self.cfg.experts:
            if expert not in streams:
                continue
            matrix, mask = _stream_rows(streams[expert])
            pooled[expert] = self.audio_vlad[expert](matrix, mask)
        if not pooled:
            raise ValueError("no experts present for this sample")
        gated = self.collaborative_gate(pooled)
        return {e: self.audio_units[e](gated[e]) for e in gated}

    def named_parameters(self) -> dict[str, ad.Tensor]:
        params = super().named_parameters()
        for expert in self.cfg.experts:
            params.update(collect(f"gate_in.{expert}", self.gate_in[expert]))
            params.update(collect(f"gate_out.{expert}", self.gate_out[expert]))
        params.update(collect("pair_fc1", self.pair_fc1))
        params.update(collect("pair_fc2", self.pair_fc2))
        return params

    def config_dict(self) -> dict:
        out = super().config_dict()
        out["gate_width"] = self.cfg.gate_width
        return out
