"""
Train on a synthetic benchmark, then search it
==============================================

The synthetic benchmark pairs each caption (a handful of vocabulary
words) with audio streams that are noisy linear images of the caption's
mean word vector, so the caption-clip correspondence is learnable from
scratch in seconds. This demo trains a small mixture model on it, saves
and reloads the checkpoint, scores the held-out test split, and answers
a free-text query against the test pool.
"""

import tempfile
from pathlib import Path

import numpy as np

from audioret.bench import Searcher, evaluate_checkpoint, synthetic_bundle
from audioret.checkpoint import load_checkpoint, save_checkpoint
from audioret.models import build_model
from audioret.training import LossConfig, TrainConfig, selection_score, train

work = Path(tempfile.mkdtemp(prefix="train-demo-"))

# the bundle holds a corpus (train/val mirrors plus a test split), an
# in-memory feature store, and the word-table text source
bundle = synthetic_bundle(seed=5, n_pairs=64, n_test=16)
for split in ("train", "val", "test"):
    n = sum(1 for s in bundle.corpus.samples if s.split == split)
    print(f"{split}: {n} samples")

# a small mixture model is enough for two low-dimensional experts
model = build_model(
    "moee", tuple(sorted(bundle.expert_dims)), bundle.expert_dims,
    text_dim=bundle.text_dim, rng=np.random.default_rng(0),
    overrides=dict(text_clusters=4, text_ghost=1, audio_clusters=4,
                   audio_ghost=0, joint_dim=32))

# training validates once per epoch and keeps the parameters of the
# epoch whose validation metrics have the best geometric-mean recall
cfg = TrainConfig(architecture="moee", epochs=15, seed=0)
ckpt = train(model, bundle.corpus, bundle.store, bundle.text_source,
             cfg, LossConfig(margin=0.2, batch_size=32))
print(f"\ntrained {cfg.epochs} epochs; best at step {ckpt.best_step} "
      f"with selection score {ckpt.selection_score:.2f}")
for step, report in ckpt.history[-3:]:
    print(f"  step {step:4d}: val R@1 {report.r1:5.1f}  "
          f"selection {selection_score(report):5.1f}")

# checkpoints round-trip through a single file
path = save_checkpoint(ckpt, work / "moee.ckpt")
back = load_checkpoint(path)
print(f"\nsaved {path.stat().st_size} bytes, "
      f"reloaded arch={back.architecture}, params={len(back.params)}")

# held-out test metrics in both directions
reports = evaluate_checkpoint(back, bundle, split="test")
for direction, rep in reports.items():
    print(f"{direction}: R@1 {rep.r1:5.1f}  R@5 {rep.r5:5.1f}  "
          f"medR {rep.medr:.1f}")

# a Searcher encodes the audio pool once and answers free-text queries;
# querying a test caption's own words should surface its paired clip
caption = bundle.corpus.captions_for_split("test")[0]
searcher = Searcher(back, bundle.corpus, bundle.store, bundle.text_source,
                    split="test")
hits = searcher.search(caption.text, top_k=5)
print(f"\nquery: {caption.text!r}")
for sample_id, score in hits:
    marker = "  <- paired clip" if sample_id == caption.sample_id else ""
    print(f"  {score:+.4f}  {sample_id}{marker}")
