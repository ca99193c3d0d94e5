"""
Experiment studies: configs, caching, and derived tables
========================================================

Benchmarks, expert ablations, and data-scale curves all run from one
flat config. Every (config, seed) run writes a JSON artifact into a
directory keyed by a hash of the canonical config — independent of the
seed list and output root — so repeated or overlapping studies reuse
finished runs instead of retraining. This demo runs a tiny benchmark on
the synthetic dataset twice (cold, then cached), then derives an
ablation and a scale curve from the same pool of artifacts.
"""

import tempfile
import time
from pathlib import Path

from audioret.bench import (RunDir, experiment_from_file, run_ablation,
                            run_benchmark, run_scale_study)

work = Path(tempfile.mkdtemp(prefix="studies-demo-"))

# configs are flat `section.key = value` lines; '#' starts a comment
cfg_path = work / "experiment.cfg"
cfg_path.write_text(f"""
experiment.dataset = synthetic
experiment.arch = moee
experiment.experts = ea, eb
experiment.seeds = 0, 1
experiment.out = {work / "runs"}

train.epochs = 12           # tiny budget; the demo is about plumbing
model.text_clusters = 4
model.text_ghost = 1
model.audio_clusters = 4
model.audio_ghost = 0
model.joint_dim = 16
loss.batch_size = 16
""")
cfg = experiment_from_file(cfg_path)
print(f"loaded config: {cfg.dataset}/{cfg.architecture}, "
      f"experts {cfg.experts}, seeds {cfg.seeds}")

# first run trains both seeds; artifacts land under a run-key directory
t0 = time.perf_counter()
table = run_benchmark(cfg)
cold = time.perf_counter() - t0
print(f"\ncold run: {cold:.1f}s")
print(table.to_text())

run_dir = RunDir(cfg).path
print(f"artifacts under {run_dir.name}:")
for p in sorted(run_dir.iterdir()):
    print(f"  {p.name}")

# the second run finds every per-seed artifact already present
t0 = time.perf_counter()
again = run_benchmark(cfg)
warm = time.perf_counter() - t0
print(f"\nwarm rerun: {warm:.2f}s (speedup x{cold / warm:.0f}), "
      f"identical table: {again.to_text() == table.to_text()}")

# an ablation sweeps expert subsets; its full subset shares the run key
# with the benchmark above, so only the two singletons actually train
print("\nablation over expert subsets:")
ab = run_ablation(cfg, [("ea",), ("eb",), ("ea", "eb")])
print(ab.to_text())

# a scale study retrains on nested subsamples of the training split;
# the fraction-1.0 row is again the cached benchmark run
print("scale curve over training fractions:")
sc = run_scale_study(cfg, fractions=(0.5, 1.0))
print(sc.to_text())
