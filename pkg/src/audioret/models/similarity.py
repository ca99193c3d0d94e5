"""Batched cross-modal scoring shared by training and evaluation.

Each side is embedded once per item; entry (i, j) is the weighted sum
of per-expert cosines between text i and audio j, with text i's softmax
mixture weights renormalized over the experts present for audio j.
The scalar score operations are the batched scorer at B=1, so the two
always agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..experts import AudioClip, TextEmbedding


@dataclass
class SimilarityMatrix:
    """values[i, j]: text row i against audio column j, in [-1, 1]."""

    values: np.ndarray
    row_ids: list[str]
    col_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError("similarity values do not match id lists")

    def transposed(self) -> "SimilarityMatrix":
        return SimilarityMatrix(self.values.T.copy(), list(self.col_ids),
                                list(self.row_ids))


def combine_scores(experts: tuple[str, ...], text_sides: list,
                   audio_sides: list[dict[str, ad.Tensor]]) -> ad.Tensor:
    """Tensor of pairwise scores from per-item encodings (graph-building)."""
    weight_rows = ad.stack_rows([t.weights for t in text_sides])
    numerator = None
    denominator = None
    for idx, expert in enumerate(experts):
        text_rows = ad.stack_rows(
            [ad.l2_normalize(t.vectors[expert]) for t in text_sides])
        audio_rows = []
        presence = np.zeros(len(audio_sides))
        for j, side in enumerate(audio_sides):
            if expert in side:
                audio_rows.append(ad.l2_normalize(side[expert]))
                presence[j] = 1.0
            else:
                audio_rows.append(ad.Tensor(np.zeros(text_rows.shape[1])))
        cosines = ad.pairwise_inner(text_rows, ad.stack_rows(audio_rows))
        weight_col = weight_rows[:, idx: idx + 1]
        contrib = ad.mul(ad.mul(weight_col, cosines), presence[None, :])
        mass = ad.mul(weight_col, ad.Tensor(presence[None, :]))
        numerator = contrib if numerator is None else ad.add(numerator, contrib)
        denominator = mass if denominator is None else ad.add(denominator, mass)
    return ad.div(numerator, denominator)


def batch_scores(model, texts: list[TextEmbedding],
                 clips: list[AudioClip]) -> ad.Tensor:
    """Encode both sides once and combine; rows texts, columns clips."""
    if not texts or not clips:
        raise ValueError("empty batch")
    text_sides = [model.encode_text(t.token_matrix, t.mask) for t in texts]
    audio_sides = [model.encode_audio(c.streams) for c in clips]
    return combine_scores(model.cfg.experts, text_sides, audio_sides)


def similarity_matrix(model, texts: list[TextEmbedding],
                      clips: list[AudioClip]) -> SimilarityMatrix:
    """Evaluation-side matrix with values clipped into [-1, 1]."""
    with ad.no_grad():
        scores = batch_scores(model, texts, clips)
    values = np.clip(scores.data, -1.0, 1.0)
    return SimilarityMatrix(values, [t.caption_id for t in texts],
                            [c.sample_id for c in clips])


def score_pair(model, text: TextEmbedding, streams) -> ad.Tensor:
    """Scalar (0-d) score of one caption against one sample's streams."""
    if isinstance(streams, AudioClip):
        clip = streams
    else:
        clip = AudioClip("query", dict(streams))
    scores = batch_scores(model, [text], [clip])
    return ad.reshape(scores, ())
