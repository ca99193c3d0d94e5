"""
Building a corpus: manifest join, split assignment, statistics
==============================================================

A corpus is a list of audio samples (id, duration, category tags) plus a
list of captions describing them. This walk-through builds one from the
two raw TSV tables the archive tooling consumes, assigns train/val/test
splits with a seeded shuffle, and prints the summary statistics report.
"""

import tempfile
from pathlib import Path

import numpy as np

from audioret.corpus import (SplitSpec, assign_splits,
                             build_sounddescs_manifest, corpus_stats,
                             load_benchmark, save_corpus)

work = Path(tempfile.mkdtemp(prefix="corpus-demo-"))

# the index table lists every archive entry: id, duration, category tags
rng = np.random.default_rng(0)
index_lines = []
for i in range(400):
    duration = float(rng.uniform(3.0, 400.0))
    tags = ["field", "studio", "archive"][i % 3]
    index_lines.append(f"rec{i:04d}\t{duration:.2f}\t{tags}")
(work / "index.tsv").write_text("\n".join(index_lines) + "\n")

# the description table holds the free-text annotations; entries without
# one are dropped by the join (here: every 40th entry has no description)
desc_lines = [f"rec{i:04d}\tdistant machinery with intermittent clanks ({i})"
              for i in range(400) if i % 40 != 0]
(work / "descriptions.tsv").write_text("\n".join(desc_lines) + "\n")

corpus, report = build_sounddescs_manifest(work / "index.tsv",
                                           work / "descriptions.tsv")
print(f"joined {report.input_entries} entries -> kept {report.kept}, "
      f"dropped {report.dropped_no_description} without descriptions")

# split assignment shuffles the sorted ids with a seeded Fisher-Yates pass,
# so the same seed always reproduces the same partition
corpus = assign_splits(corpus, SplitSpec(ratios=(0.70, 0.15, 0.15), seed=7))
for split in ("train", "val", "test"):
    print(f"  {split}: {len(corpus.split_ids(split))} samples")

# the statistics report summarizes durations, caption lengths, categories
print()
print(corpus_stats(corpus).to_text())

# save_corpus writes the directory layout that load_benchmark reads back
root = save_corpus(corpus, work / "sounddescs")
reloaded = load_benchmark("sounddescs", root)
assert reloaded.split_ids("train") == corpus.split_ids("train")
print(f"round-tripped through {root}")
