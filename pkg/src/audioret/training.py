"""Mini-batch optimization of the bidirectional ranking objective.

The loop is deliberately plain: seeded shuffling, greedy batch assembly
that never places two captions of the same clip in one batch (they would
be false negatives for each other), a non-iterative decayed learning
rate, periodic validation, and best-checkpoint selection by the
geometric mean of R@1/R@5/R@10.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import models as md
from . import optim
from .corpus import Corpus
from .evaluation import MetricsReport, compute_metrics, t2a_ground_truth
from .experts import AudioClip, TextEmbedding, gather_clip
from .models.similarity import SimilarityMatrix, batch_scores, similarity_matrix

LOG_FIELDS = ("step", "split", "loss", "R@1", "R@5", "R@10", "medR", "meanR")

# word cap and per-expert frame caps, keyed by dataset name
DATASET_CAPS = {
    "audiocaps": (52, {"VGGish": 10, "VGGSound": 32}),
    "clotho": (21, {"VGGish": 31, "VGGSound": 95}),
    "sounddescs": (46, {"VGGish": 400, "VGGSound": 400}),
}


def default_caps(dataset: str, architecture: str) -> tuple[int, dict[str, int]]:
    """Per-dataset word/frame maxima; the attention model reads the full
    95 frames from both audio experts on clotho."""
    if dataset not in DATASET_CAPS:
        raise ValueError(f"no default caps for dataset {dataset!r}")
    words, frames = DATASET_CAPS[dataset]
    frames = dict(frames)
    if dataset == "clotho" and architecture == "mmt":
        frames["VGGish"] = 95
    return words, frames


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2
    batch_size: int = 128

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (the loss needs negatives)")


@dataclass(frozen=True)
class TrainConfig:
    architecture: str
    epochs: int | None = None
    steps: int | None = None
    lr: float = 0.01
    weight_decay: float = 0.001
    lr_decay: float = 0.95
    decay_every_steps: int | None = None  # None: decay once per epoch
    val_every_steps: int | None = None    # None: validate once per epoch
    optimizer: str = "lookahead_radam"
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    seed: int = 0
    word_cap: int | None = None
    frame_caps: dict[str, int] = field(default_factory=dict)
    checkpoint_every: int | None = None   # extra snapshots every N val points
    log_path: str | None = None

    def __post_init__(self):
        if self.architecture not in md.ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if (self.epochs is None) == (self.steps is None):
            raise ValueError("set exactly one of epochs/steps")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("decay factor must be in (0, 1]")
        budget = self.epochs if self.epochs is not None else self.steps
        if budget < 0:
            raise ValueError("schedule budget must be >= 0")


def scheduled_lr(lr0: float, decay: float, periods: int) -> float:
    """Learning rate after a number of completed decay periods."""
    return lr0 * decay ** periods


# ---------------------------------------------------------------------------
# loss


def ranking_loss(scores, margin: float) -> ad.Tensor:
    """Bidirectional max-margin loss over a square in-batch score matrix.

    L = (1/B) Σ_{i, j≠i} [m + s_ij − s_ii]_+ + [m + s_ji − s_ii]_+
    with the positive pairs on the diagonal.
    """
    if isinstance(scores, SimilarityMatrix):
        scores = scores.values
    if not isinstance(scores, ad.Tensor):
        scores = ad.Tensor(np.asarray(scores, dtype=np.float64))
    if scores.data.ndim != 2 or scores.data.shape[0] != scores.data.shape[1]:
        raise ValueError("score matrix must be square")
    b = scores.data.shape[0]
    if b < 2:
        raise ValueError("need at least 2 pairs for in-batch negatives")
    eye = np.eye(b)
    diag = ad.reshape(ad.tsum(ad.mul(scores, eye), axis=1), (b, 1))
    t2a = ad.relu(ad.add(ad.sub(scores, diag), margin))
    a2t = ad.relu(ad.add(ad.sub(ad.transpose(scores), diag), margin))
    off = ad.mul(ad.add(t2a, a2t), 1.0 - eye)
    return ad.div(ad.tsum(off), float(b))


# ---------------------------------------------------------------------------
# batch assembly


def assemble_batches(pairs: list[tuple[str, str]], batch_size: int,
                     rng: np.random.Generator) -> list[list[tuple[str, str]]]:
    """Shuffle (caption, clip) pairs into full batches of distinct clips.

    Greedy scan with carryover: a pair whose clip already sits in the
    batch under assembly is skipped and reconsidered for later batches.
    The final short batch is dropped.
    """
    remaining = [pairs[i] for i in rng.permutation(len(pairs))]
    batches = []
    while True:
        batch, used, leftover = [], set(), []
        for pair in remaining:
            if len(batch) < batch_size and pair[1] not in used:
                batch.append(pair)
                used.add(pair[1])
            else:
                leftover.append(pair)
        if len(batch) < batch_size:
            return batches
        batches.append(batch)
        remaining = leftover


# ---------------------------------------------------------------------------
# checkpoints and selection


@dataclass
class TransferReport:
    reused: list[str]
    reinitialized: list[str]
    dropped: list[str]


@dataclass
class Checkpoint:
    architecture: str
    model_config: dict
    params: dict[str, np.ndarray]
    train_config: TrainConfig
    history: list[tuple[int, MetricsReport]]
    selection_score: float
    best_step: int
    log_lines: list[str] = field(default_factory=list)
    transfer: TransferReport | None = None

    def rebuild(self) -> object:
        """Instantiate the architecture and load this checkpoint's weights."""
        model = md.model_from_config(self.architecture, self.model_config,
                                     np.random.default_rng(0))
        target = model.named_parameters()
        if set(target) != set(self.params):
            raise ValueError("checkpoint parameter names do not match architecture")
        for name, arr in self.params.items():
            if target[name].data.shape != arr.shape:
                raise ValueError(f"checkpoint tensor {name} has wrong shape")
            target[name].data[...] = arr
        return model


def selection_score(report: MetricsReport) -> float:
    """Geometric mean of R@1, R@5, R@10."""
    return float(np.cbrt(report.r1 * report.r5 * report.r10))


def select_best(history: list[tuple[int, MetricsReport]]) -> int:
    """Index of the history entry with the best selection score, earliest
    entry winning ties."""
    if not history:
        raise ValueError("empty history")
    scores = [selection_score(rep) for _, rep in history]
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


# ---------------------------------------------------------------------------
# data staging


def _capped_text(emb: TextEmbedding, cap: int | None) -> TextEmbedding:
    if cap is None or emb.token_matrix.shape[0] <= cap:
        return emb
    return TextEmbedding(emb.caption_id, emb.token_matrix[:cap], emb.mask[:cap])


def stage_split(corpus: Corpus, split: str, store, text_source,
                experts: tuple[str, ...], cfg: TrainConfig):
    """Fetch every caption embedding and clip of a split once, capped."""
    captions = corpus.captions_for_split(split)
    if not captions:
        raise ValueError(f"corpus has no captions in split {split!r}")
    texts = {c.caption_id: _capped_text(text_source.tokens_for(c), cfg.word_cap)
             for c in captions}
    clips = {}
    for sid in corpus.split_ids(split):
        clips[sid] = gather_clip(store, sid, experts, cfg.frame_caps or None,
                                 required=True)
    pairs = [(c.caption_id, c.sample_id) for c in captions]
    return pairs, texts, clips


def _validate(model, texts: dict[str, TextEmbedding],
              clips: dict[str, AudioClip], gt) -> MetricsReport:
    sim = similarity_matrix(model, list(texts.values()), list(clips.values()))
    return compute_metrics(sim, gt)


def _log_line(step: int, split: str, loss: float, rep: MetricsReport) -> str:
    return (f"{step},{split},{loss:.6f},{rep.r1:.2f},{rep.r5:.2f},"
            f"{rep.r10:.2f},{rep.medr:.1f},{rep.meanr:.2f}")


# ---------------------------------------------------------------------------
# the loop


def train(model, corpus: Corpus, store, text_source, cfg: TrainConfig,
          loss_cfg: LossConfig) -> Checkpoint:
    """Optimize model on corpus's train split, selecting by val metrics.

    Deterministic given the model's initial parameters, cfg.seed, and the
    staged data; aborts on a non-finite loss rather than skipping steps.
    """
    rng = np.random.default_rng(cfg.seed)
    experts = tuple(model.cfg.experts)
    pairs, train_texts, train_clips = stage_split(
        corpus, "train", store, text_source, experts, cfg)
    _, val_texts, val_clips = stage_split(
        corpus, "val", store, text_source, experts, cfg)
    val_gt = t2a_ground_truth(
        Corpus(corpus.name, [s for s in corpus.samples if s.split == "val"],
               corpus.captions_for_split("val")))

    params = model.named_parameters()
    opt = optim.build_optimizer(cfg.optimizer, params, cfg.lr,
                                weight_decay=cfg.weight_decay,
                                lookahead_k=cfg.lookahead_k,
                                lookahead_alpha=cfg.lookahead_alpha)

    by_epoch = cfg.epochs is not None
    budget = cfg.epochs if by_epoch else cfg.steps
    decay_every = cfg.decay_every_steps or 1000
    val_every = cfg.val_every_steps or 1000

    history: list[tuple[int, MetricsReport]] = []
    log_lines: list[str] = []
    best: tuple[float, int, dict[str, np.ndarray]] | None = None
    step = 0
    window: list[float] = []

    def run_validation() -> None:
        nonlocal best
        report = _validate(model, val_texts, val_clips, val_gt)
        mean_loss = float(np.mean(window)) if window else float("nan")
        window.clear()
        history.append((step, report))
        log_lines.append(_log_line(step, "val", mean_loss, report))
        score = selection_score(report)
        if best is None or score > best[0]:
            best = (score, step, {k: p.data.copy() for k, p in params.items()})

    def run_batch(batch) -> None:
        nonlocal step
        texts = [train_texts[cid] for cid, _ in batch]
        clips = [train_clips[sid] for _, sid in batch]
        if not by_epoch:
            opt.lr = scheduled_lr(cfg.lr, cfg.lr_decay, step // decay_every)
        loss = ranking_loss(batch_scores(model, texts, clips), loss_cfg.margin)
        value = loss.item()
        if not np.isfinite(value):
            raise RuntimeError(f"training diverged: loss {value} at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        window.append(value)
        step += 1

    if budget == 0:
        run_validation()
    elif by_epoch:
        for epoch in range(budget):
            opt.lr = scheduled_lr(cfg.lr, cfg.lr_decay, epoch)
            for batch in assemble_batches(pairs, loss_cfg.batch_size, rng):
                run_batch(batch)
            run_validation()
    else:
        while step < budget:
            batches = assemble_batches(pairs, loss_cfg.batch_size, rng)
            if not batches:
                raise ValueError("train split too small for one full batch")
            for batch in batches:
                run_batch(batch)
                if step % val_every == 0:
                    run_validation()
                if step >= budget:
                    break
        if not history or history[-1][0] != step:
            run_validation()

    if cfg.log_path:
        Path(cfg.log_path).write_text(
            ",".join(LOG_FIELDS) + "\n" + "\n".join(log_lines) + "\n")
    score, best_step, best_params = best
    return Checkpoint(cfg.architecture, model.config_dict(), best_params,
                      cfg, history, score, best_step, log_lines)


def finetune(ckpt: Checkpoint, corpus: Corpus, store, text_source,
             cfg: TrainConfig, loss_cfg: LossConfig,
             experts: tuple[str, ...] | None = None) -> Checkpoint:
    """Continue training from a checkpoint, possibly on fewer experts.

    Parameters whose names and shapes carry over are copied; surplus
    branches are dropped and incompatible ones freshly initialized, both
    reported (and warned about) so silent mismatches cannot happen.
    """
    if cfg.architecture != ckpt.architecture:
        raise ValueError(f"architecture mismatch: checkpoint is "
                         f"{ckpt.architecture}, config says {cfg.architecture}")
    config = dict(ckpt.model_config)
    if experts is not None:
        known = set(config["experts"])
        unknown = [e for e in experts if e not in known]
        if unknown:
            raise ValueError(f"checkpoint has no expert {unknown[0]!r}")
        config["experts"] = list(experts)
        config["expert_dims"] = {e: config["expert_dims"][e] for e in experts}
    model = md.model_from_config(ckpt.architecture, config,
                                 np.random.default_rng(cfg.seed))
    target = model.named_parameters()
    report = TransferReport([], [], [])
    for name, arr in ckpt.params.items():
        if name not in target:
            report.dropped.append(name)
        elif target[name].data.shape != arr.shape:
            report.reinitialized.append(name)
        else:
            target[name].data[...] = arr
            report.reused.append(name)
    report.reinitialized += [n for n in target if n not in ckpt.params]
    if report.dropped:
        warnings.warn(f"dropping {len(report.dropped)} checkpoint tensors "
                      f"with no slot in the target model (e.g. {report.dropped[0]})")
    if report.reinitialized:
        warnings.warn(f"freshly initializing {len(report.reinitialized)} "
                      f"tensors (e.g. {report.reinitialized[0]})")
    out = train(model, corpus, store, text_source, cfg, loss_cfg)
    out.transfer = report
    return out


def with_schedule(cfg: TrainConfig, **changes) -> TrainConfig:
    """Derived config with replaced fields (frozen-dataclass convenience)."""
    return replace(cfg, **changes)
