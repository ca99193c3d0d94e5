"""Experiment orchestration: seeded benchmark runs, ablations over expert
subsets, pretrain→finetune transfer, training-scale curves, and ad-hoc
text search against a checkpoint.

Every run persists per-seed metric artifacts under a directory named by
a hash of the exact configuration, so results are cached by content:
rerunning the same config reuses the stored reports bit-for-bit, and a
changed config can never silently pick up stale artifacts. Tables are
assembled only from those stored reports.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import models as md
from . import training as tr
from .corpus import (DATASET_NAMES, Corpus, load_benchmark)
from .evaluation import (MetricsReport, ResultRow, SeedAggregate,
                         a2t_ground_truth, aggregate_seeds, compute_metrics,
                         render_csv, render_table, t2a_ground_truth)
from .experts import (DEFAULT_REGISTRY, WordTableTextSource, load_word_table,
                      open_feature_store)
from .models.similarity import combine_scores
from .synthetic import make_synthetic_benchmark
from .training import Checkpoint, LossConfig, TrainConfig

FEATURES_ENV = "AUDIORET_FEATURES"
DATA_ENV = "AUDIORET_DATA_ROOT"

DEFAULT_SEEDS = (0, 1, 2)
DEFAULT_FRACTIONS = (0.125, 0.25, 0.5, 1.0)

# per-architecture schedule defaults
ARCH_DEFAULTS = {
    "moee": dict(epochs=20, lr=0.01, weight_decay=0.001,
                 optimizer="lookahead_radam", margin=0.2, batch_size=128),
    "ce": dict(epochs=20, lr=0.01, weight_decay=0.001,
               optimizer="lookahead_radam", margin=0.2, batch_size=128),
    "mmt": dict(steps=50_000, lr=5e-5, weight_decay=0.0, optimizer="adam",
                decay_every_steps=1000, val_every_steps=1000,
                margin=0.05, batch_size=32),
}


# ---------------------------------------------------------------------------
# flat config files


def parse_config(text: str) -> dict[str, dict[str, str]]:
    """Parse `section.key=value` lines; '#' starts a comment."""
    sections: dict[str, dict[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            raise ValueError(f"config line {lineno}: key must be section.name")
        section, name = key.split(".", 1)
        bucket = sections.setdefault(section, {})
        if name in bucket:
            raise ValueError(f"config line {lineno}: duplicate key {key}")
        bucket[name] = value
    return sections


def _parse_list(value: str, cast):
    return tuple(cast(part.strip()) for part in value.split(",") if part.strip())


def _coerce(value: str):
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", ""):
        return None
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _parse_caps(value: str) -> dict[str, int]:
    caps = {}
    for part in value.split(","):
        if not part.strip():
            continue
        expert, _, cap = part.partition(":")
        caps[expert.strip()] = int(cap)
    return caps


@dataclass
class ExperimentConfig:
    dataset: str
    architecture: str
    experts: tuple[str, ...]
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    train: dict = field(default_factory=dict)
    loss: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    out_dir: str = "runs"
    extras: dict[str, dict[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        self.experts = tuple(self.experts)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.experts:
            raise ValueError("expert subset must be non-empty")
        if len(set(self.experts)) != len(self.experts):
            raise ValueError("duplicate expert in subset")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.architecture not in md.ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.dataset not in DATASET_NAMES + ("synthetic",):
            raise ValueError(f"unknown dataset {self.dataset!r}")

    def canonical_lines(self, extra: dict | None = None) -> list[str]:
        entries = {
            "dataset": self.dataset,
            "arch": self.architecture,
            "experts": ",".join(self.experts),
        }
        for section, table in (("train", self.train), ("loss", self.loss),
                               ("model", self.model)):
            for key, value in table.items():
                entries[f"{section}.{key}"] = repr(value)
        for key, value in (extra or {}).items():
            entries[key] = repr(value)
        return [f"{k}={entries[k]}" for k in sorted(entries)]

    def run_key(self, extra: dict | None = None) -> str:
        digest = hashlib.sha256(
            "\n".join(self.canonical_lines(extra)).encode()).hexdigest()
        return digest[:16]


def experiment_from_sections(sections: dict[str, dict[str, str]],
                             **overrides) -> ExperimentConfig:
    exp = dict(sections.get("experiment", {}))
    kwargs = {
        "dataset": exp.pop("dataset", None),
        "architecture": exp.pop("arch", exp.pop("architecture", None)),
        "experts": _parse_list(exp.pop("experts", ""), str),
        "out_dir": exp.pop("out", exp.pop("out_dir", "runs")),
    }
    if "seeds" in exp:
        kwargs["seeds"] = _parse_list(exp.pop("seeds"), int)
    if exp:
        raise ValueError(f"unknown experiment key {sorted(exp)[0]!r}")
    kwargs["train"] = {k: (_parse_caps(v) if k == "frame_caps" else _coerce(v))
                       for k, v in sections.get("train", {}).items()}
    kwargs["loss"] = {k: _coerce(v) for k, v in sections.get("loss", {}).items()}
    kwargs["model"] = {k: _coerce(v) for k, v in sections.get("model", {}).items()}
    kwargs["extras"] = {name: dict(table) for name, table in sections.items()
                        if name not in ("experiment", "train", "loss", "model")}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in ("dataset", "architecture") if not kwargs.get(k)]
    if missing:
        raise ValueError(f"config is missing experiment.{missing[0]}")
    return ExperimentConfig(**kwargs)


def experiment_from_file(path: Path | str, **overrides) -> ExperimentConfig:
    return experiment_from_sections(parse_config(Path(path).read_text()),
                                    **overrides)


# ---------------------------------------------------------------------------
# data plumbing


@dataclass
class DataBundle:
    corpus: Corpus
    store: object
    text_source: object
    expert_dims: dict[str, int]
    text_dim: int


def synthetic_bundle(seed: int = 1234, n_pairs: int = 48,
                     n_test: int = 16) -> DataBundle:
    bench = make_synthetic_benchmark(np.random.default_rng(seed),
                                     n_pairs=n_pairs, n_test=n_test)
    return DataBundle(bench.corpus, bench.store, bench.text_source,
                      dict(bench.expert_dims), bench.word_table.dim)


def load_data(cfg: ExperimentConfig) -> DataBundle:
    """Resolve the corpus, feature store, and text embeddings for a config.

    The synthetic dataset is generated in memory; real datasets read the
    corpus root and feature root from environment variables, each holding
    one subdirectory per dataset.
    """
    if cfg.dataset == "synthetic":
        return synthetic_bundle()
    data_root = os.environ.get(DATA_ENV)
    feature_root = os.environ.get(FEATURES_ENV)
    if not data_root or not feature_root:
        raise RuntimeError(
            f"dataset {cfg.dataset!r} needs {DATA_ENV} (corpus root) and "
            f"{FEATURES_ENV} (feature root) set")
    corpus = load_benchmark(cfg.dataset, Path(data_root) / cfg.dataset)
    store = open_feature_store(Path(feature_root) / cfg.dataset)
    table = load_word_table(Path(feature_root) / "word_table.txt")
    dims = {name: DEFAULT_REGISTRY.dim(name) for name in DEFAULT_REGISTRY.names}
    return DataBundle(corpus, store, WordTableTextSource(table), dims,
                      table.dim)


# ---------------------------------------------------------------------------
# single seeded run


def _build_configs(cfg: ExperimentConfig, seed: int) -> tuple[TrainConfig, LossConfig]:
    defaults = dict(ARCH_DEFAULTS[cfg.architecture])
    margin = defaults.pop("margin")
    batch = defaults.pop("batch_size")
    train_kw = defaults | dict(cfg.train)
    if "steps" in cfg.train and "epochs" not in cfg.train:
        train_kw.pop("epochs", None)  # config switched the budget type
    if "epochs" in cfg.train and "steps" not in cfg.train:
        train_kw.pop("steps", None)
    if cfg.dataset in tr.DATASET_CAPS and "frame_caps" not in train_kw:
        words, frames = tr.default_caps(cfg.dataset, cfg.architecture)
        train_kw.setdefault("word_cap", words)
        train_kw["frame_caps"] = {e: c for e, c in frames.items()
                                  if e in cfg.experts}
    train_cfg = TrainConfig(architecture=cfg.architecture, seed=seed, **train_kw)
    loss_kw = dict(margin=margin, batch_size=batch) | dict(cfg.loss)
    return train_cfg, LossConfig(**loss_kw)


def _build_model(cfg: ExperimentConfig, bundle: DataBundle, seed: int):
    missing = [e for e in cfg.experts if e not in bundle.expert_dims]
    if missing:
        raise ValueError(f"expert not available for {cfg.dataset}: {missing[0]!r}")
    dims = {e: bundle.expert_dims[e] for e in cfg.experts}
    return md.build_model(cfg.architecture, cfg.experts, dims, bundle.text_dim,
                          np.random.default_rng(seed), dict(cfg.model))


def evaluate_checkpoint(ckpt: Checkpoint, bundle: DataBundle,
                        split: str = "test") -> dict[str, MetricsReport]:
    """Both-direction metrics of a checkpoint on one corpus split."""
    model = ckpt.rebuild()
    _, texts, clips = tr.stage_split(bundle.corpus, split, bundle.store,
                                     bundle.text_source,
                                     tuple(model.cfg.experts),
                                     ckpt.train_config)
    from .models.similarity import similarity_matrix
    sim = similarity_matrix(model, list(texts.values()), list(clips.values()))
    split_corpus = Corpus(
        bundle.corpus.name,
        [s for s in bundle.corpus.samples if s.split == split],
        bundle.corpus.captions_for_split(split))
    return {"t2a": compute_metrics(sim, t2a_ground_truth(split_corpus)),
            "a2t": compute_metrics(sim.transposed(),
                                   a2t_ground_truth(split_corpus))}


def _report_to_dict(rep: MetricsReport) -> dict:
    return rep.by_column() | {"pool_size": rep.pool_size,
                              "query_count": rep.query_count}


def _report_from_dict(d: dict) -> MetricsReport:
    return MetricsReport(d["R@1"], d["R@5"], d["R@10"], d["R@50"], d["medR"],
                         d["meanR"], pool_size=int(d["pool_size"]),
                         query_count=int(d["query_count"]))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


class RunDir:
    """Content-addressed artifact directory for one configuration."""

    def __init__(self, cfg: ExperimentConfig, extra: dict | None = None):
        self.path = Path(cfg.out_dir) / cfg.run_key(extra)
        self.path.mkdir(parents=True, exist_ok=True)
        _atomic_write(self.path / "config.txt",
                      "\n".join(cfg.canonical_lines(extra)) + "\n")

    def seed_artifact(self, seed: int) -> Path:
        return self.path / f"seed{seed}.json"

    def load_seed(self, seed: int) -> dict | None:
        path = self.seed_artifact(seed)
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def store_seed(self, seed: int, payload: dict) -> None:
        _atomic_write(self.seed_artifact(seed), json.dumps(payload, indent=1,
                                                           sort_keys=True))


def run_single(cfg: ExperimentConfig, bundle: DataBundle, seed: int,
               run_dir: RunDir, train_bundle: DataBundle | None = None,
               pretrained: Checkpoint | None = None) -> dict:
    """Train (or reuse a cached artifact) for one seed; return the artifact."""
    cached = run_dir.load_seed(seed)
    if cached is not None:
        return cached
    train_cfg, loss_cfg = _build_configs(cfg, seed)
    data = train_bundle or bundle
    if pretrained is not None:
        ckpt = tr.finetune(pretrained, data.corpus, data.store,
                           data.text_source, train_cfg, loss_cfg)
    else:
        model = _build_model(cfg, data, seed)
        ckpt = tr.train(model, data.corpus, data.store, data.text_source,
                        train_cfg, loss_cfg)
    reports = evaluate_checkpoint(ckpt, bundle)
    payload = {
        "seed": seed,
        "selection_score": ckpt.selection_score,
        "best_step": ckpt.best_step,
        "t2a": _report_to_dict(reports["t2a"]),
        "a2t": _report_to_dict(reports["a2t"]),
        "log": ckpt.log_lines,
    }
    run_dir.store_seed(seed, payload)
    return payload


def _aggregate_artifacts(artifacts: list[dict]) -> dict[str, MetricsReport | SeedAggregate]:
    out = {}
    for direction in ("t2a", "a2t"):
        reports = [_report_from_dict(a[direction]) for a in artifacts]
        out[direction] = reports[0] if len(reports) == 1 else aggregate_seeds(reports)
    return out


# ---------------------------------------------------------------------------
# result tables


@dataclass
class ResultTable:
    rows: list[ResultRow]

    def to_text(self) -> str:
        return render_table(self.rows)

    def to_csv(self) -> str:
        return render_csv(self.rows)

    def save(self, directory: Path | str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        _atomic_write(directory / "table.txt", self.to_text())
        _atomic_write(directory / "table.csv", self.to_csv())

    def cell_mean(self, label: str, direction: str, column: str) -> float:
        for row in self.rows:
            if row.label == label:
                entry = row.by_direction[direction]
                if isinstance(entry, SeedAggregate):
                    return entry.means[column]
                return entry.by_column()[column]
        raise KeyError(label)


# ---------------------------------------------------------------------------
# studies


def run_benchmark(cfg: ExperimentConfig,
                  data: DataBundle | None = None) -> ResultTable:
    """Train/evaluate cfg across its seeds; one aggregated table row."""
    bundle = data or load_data(cfg)
    run_dir = RunDir(cfg)
    artifacts = [run_single(cfg, bundle, seed, run_dir) for seed in cfg.seeds]
    label = f"{cfg.dataset}/{cfg.architecture}"
    table = ResultTable([ResultRow(label, _aggregate_artifacts(artifacts))])
    table.save(run_dir.path)
    return table


def run_ablation(cfg: ExperimentConfig, subsets: list[tuple[str, ...]],
                 data: DataBundle | None = None) -> ResultTable:
    """One benchmark per expert subset, rows in the configured order."""
    if not subsets:
        raise ValueError("no expert subsets configured")
    bundle = data or load_data(cfg)
    rows = []
    for subset in subsets:
        sub_cfg = ExperimentConfig(cfg.dataset, cfg.architecture, tuple(subset),
                                   cfg.seeds, dict(cfg.train), dict(cfg.loss),
                                   dict(cfg.model), cfg.out_dir)
        run_dir = RunDir(sub_cfg)
        artifacts = [run_single(sub_cfg, bundle, seed, run_dir)
                     for seed in sub_cfg.seeds]
        rows.append(ResultRow("+".join(subset), _aggregate_artifacts(artifacts)))
        ResultTable([rows[-1]]).save(run_dir.path)
    table = ResultTable(rows)
    table.save(RunDir(cfg, {"study": "ablation",
                            "subsets": [list(s) for s in subsets]}).path)
    return table


def run_transfer(cfg: ExperimentConfig, source_dataset: str,
                 data: DataBundle | None = None,
                 source_data: DataBundle | None = None) -> ResultTable:
    """Contrast from-scratch target training against pretrain→finetune."""
    bundle = data or load_data(cfg)
    if source_dataset == cfg.dataset:
        warnings.warn("transfer source equals target; this is just longer "
                      "training on the same data")
    source_cfg = ExperimentConfig(source_dataset, cfg.architecture, cfg.experts,
                                  cfg.seeds, dict(cfg.train), dict(cfg.loss),
                                  dict(cfg.model), cfg.out_dir)
    source_bundle = source_data or load_data(source_cfg)

    scratch_dir = RunDir(cfg)
    scratch = [run_single(cfg, bundle, seed, scratch_dir) for seed in cfg.seeds]

    fine_dir = RunDir(cfg, {"study": "transfer", "source": source_dataset})
    finetuned = []
    for seed in cfg.seeds:
        cached = fine_dir.load_seed(seed)
        if cached is not None:
            finetuned.append(cached)
            continue
        train_cfg, loss_cfg = _build_configs(source_cfg, seed)
        model = _build_model(source_cfg, source_bundle, seed)
        pre = tr.train(model, source_bundle.corpus, source_bundle.store,
                       source_bundle.text_source, train_cfg, loss_cfg)
        finetuned.append(run_single(cfg, bundle, seed, fine_dir,
                                    pretrained=pre))
    rows = [ResultRow(f"{cfg.dataset}/scratch", _aggregate_artifacts(scratch)),
            ResultRow(f"{source_dataset}→{cfg.dataset}",
                      _aggregate_artifacts(finetuned))]
    table = ResultTable(rows)
    table.save(fine_dir.path)
    return table


def subsample_train(corpus: Corpus, fraction: float, seed: int) -> Corpus:
    """Keep ⌊fraction·N⌋ training samples by a seeded membership filter.

    Filters nest: a smaller fraction keeps a subset of a larger one, and
    fraction 1.0 keeps the corpus identical (same sample order, no
    rebuild noise), because membership never reorders the sample list.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    train_ids = sorted(s.sample_id for s in corpus.samples if s.split == "train")
    keep_count = int(fraction * len(train_ids))
    order = np.random.default_rng(seed).permutation(len(train_ids))
    kept = {train_ids[i] for i in order[:keep_count]}
    samples = [s for s in corpus.samples
               if s.split != "train" or s.sample_id in kept]
    ids = {s.sample_id for s in samples}
    captions = [c for c in corpus.captions if c.sample_id in ids]
    return Corpus(corpus.name, samples, captions, corpus.split_seed)


def run_scale_study(cfg: ExperimentConfig, fractions=DEFAULT_FRACTIONS,
                    data: DataBundle | None = None,
                    subsample_seed: int = 0) -> ResultTable:
    """Metric-vs-training-fraction curve over nested seeded subsamples."""
    fractions = tuple(float(f) for f in fractions)
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {f}")
    bundle = data or load_data(cfg)
    rows = []
    for fraction in fractions:
        extra = None if fraction == 1.0 else {"fraction": fraction,
                                              "subsample_seed": subsample_seed}
        run_dir = RunDir(cfg, extra)
        sub_corpus = subsample_train(bundle.corpus, fraction, subsample_seed)
        sub_bundle = DataBundle(sub_corpus, bundle.store, bundle.text_source,
                                bundle.expert_dims, bundle.text_dim)
        artifacts = [run_single(cfg, bundle, seed, run_dir,
                                train_bundle=sub_bundle)
                     for seed in cfg.seeds]
        n_train = len(sub_corpus.split_ids("train"))
        rows.append(ResultRow(f"frac={fraction:g} (n={n_train})",
                              _aggregate_artifacts(artifacts)))
    table = ResultTable(rows)
    table.save(RunDir(cfg, {"study": "scale", "fractions": list(fractions),
                            "subsample_seed": subsample_seed}).path)
    return table


# ---------------------------------------------------------------------------
# search


class Searcher:
    """Session object answering free-text queries against one checkpoint.

    Audio-side embeddings for the pool are computed once at construction
    and reused for every query; ranking uses the evaluation tie-break
    (score descending, then sample id ascending).
    """

    def __init__(self, ckpt: Checkpoint, corpus: Corpus, store, text_source,
                 split: str = "test"):
        self.model = ckpt.rebuild()
        self.text_source = text_source
        experts = tuple(self.model.cfg.experts)
        _, _, clips = tr.stage_split(corpus, split, store, text_source,
                                     experts, ckpt.train_config)
        self.pool_ids = sorted(clips)
        with ad.no_grad():
            self.audio_sides = [self.model.encode_audio(clips[sid].streams)
                                for sid in self.pool_ids]

    def search(self, query: str, top_k: int = 10) -> list[tuple[str, float]]:
        if not query or not query.strip():
            raise ValueError("empty query")
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        from .corpus import CaptionRecord
        probe = CaptionRecord("query", "query", query)
        emb = self.text_source.tokens_for(probe)
        with ad.no_grad():
            text_side = self.model.encode_text(emb.token_matrix, emb.mask)
            scores = combine_scores(tuple(self.model.cfg.experts), [text_side],
                                    self.audio_sides)
        values = np.clip(scores.data[0], -1.0, 1.0)
        ids = np.asarray(self.pool_ids)
        order = np.lexsort((ids, -values))[:min(top_k, len(ids))]
        return [(str(ids[i]), float(values[i])) for i in order]


def search(ckpt: Checkpoint, corpus: Corpus, store, text_source, query: str,
           top_k: int = 10, split: str = "test") -> list[tuple[str, float]]:
    """One-shot search; hold a Searcher to amortize the pool encoding."""
    return Searcher(ckpt, corpus, store, text_source, split).search(query, top_k)
