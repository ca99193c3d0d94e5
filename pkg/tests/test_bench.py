"""Experiment orchestration: config parsing, content-addressed run
caching, study tables, text search, and the command-line surface."""

import json
import shutil
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import audioret.bench as bn
import audioret.training as tr
from audioret.checkpoint import save_checkpoint
from audioret.cli import main as cli_main
from audioret.evaluation import MetricsReport, SeedAggregate
from audioret.models.similarity import similarity_matrix
from audioret.synthetic import make_synthetic_benchmark, make_word_table

TINY_MODEL = dict(text_clusters=2, text_ghost=1, audio_clusters=2,
                  audio_ghost=0, joint_dim=8)
TINY_TRAIN = {"epochs": 2}
TINY_LOSS = {"batch_size": 8}

DIRECTIONS = ("t2a", "a2t")
COLUMNS = ("R@1", "R@5", "R@10", "R@50", "medR", "meanR")


def tiny_config(out_dir, seeds=(0, 1), experts=("ea", "eb"), **over):
    kw = dict(dataset="synthetic", architecture="moee", experts=experts,
              seeds=seeds, train=dict(TINY_TRAIN), loss=dict(TINY_LOSS),
              model=dict(TINY_MODEL), out_dir=str(out_dir))
    kw.update(over)
    return bn.ExperimentConfig(**kw)


@pytest.fixture(scope="module")
def bundle():
    return bn.synthetic_bundle()


@pytest.fixture(scope="module")
def rig(tmp_path_factory, bundle):
    """One benchmark over two seeds whose artifacts later tests reuse."""
    out = tmp_path_factory.mktemp("runs")
    cfg = tiny_config(out)
    table = bn.run_benchmark(cfg, data=bundle)
    return cfg, table


@pytest.fixture(scope="module")
def frozen_ckpt(bundle):
    """An untrained (zero-epoch) checkpoint for search/evaluation tests."""
    cfg = tiny_config("unused-dir", seeds=(0,), train={"epochs": 0})
    train_cfg, loss_cfg = bn._build_configs(cfg, 0)
    model = bn._build_model(cfg, bundle, 0)
    return tr.train(model, bundle.corpus, bundle.store, bundle.text_source,
                    train_cfg, loss_cfg)


# ---------------------------------------------------------------------------
# flat config files


def test_parse_config_sections_comments_blanks():
    text = """
# leading comment
experiment.dataset = synthetic
experiment.arch = moee   # trailing comment

train.epochs = 4
loss.margin = 0.1
"""
    sections = bn.parse_config(text)
    assert sections == {
        "experiment": {"dataset": "synthetic", "arch": "moee"},
        "train": {"epochs": "4"},
        "loss": {"margin": "0.1"},
    }


def test_parse_config_rejects_missing_equals():
    with pytest.raises(ValueError, match="line 2.*key=value"):
        bn.parse_config("a.b = 1\njust words\n")


def test_parse_config_rejects_undotted_key():
    with pytest.raises(ValueError, match="line 1.*section.name"):
        bn.parse_config("epochs = 4\n")


def test_parse_config_rejects_duplicate_key():
    with pytest.raises(ValueError, match="line 3.*duplicate key train.epochs"):
        bn.parse_config("train.epochs = 1\ntrain.lr = 0.1\ntrain.epochs = 2\n")


def test_experiment_from_sections_round_trip():
    sections = bn.parse_config("""
experiment.dataset = audiocaps
experiment.arch = ce
experiment.experts = VGGish,VGGSound
experiment.seeds = 3,5
experiment.out = artifacts
train.epochs = 7
train.lr = 0.05
train.frame_caps = VGGish:10,VGGSound:32
loss.margin = 0.3
loss.batch_size = 16
model.joint_dim = 32
ablate.subsets = VGGish;VGGSound
""")
    cfg = bn.experiment_from_sections(sections)
    assert cfg.dataset == "audiocaps"
    assert cfg.architecture == "ce"
    assert cfg.experts == ("VGGish", "VGGSound")
    assert cfg.seeds == (3, 5)
    assert cfg.out_dir == "artifacts"
    assert cfg.train == {"epochs": 7, "lr": 0.05,
                         "frame_caps": {"VGGish": 10, "VGGSound": 32}}
    assert cfg.loss == {"margin": 0.3, "batch_size": 16}
    assert cfg.model == {"joint_dim": 32}
    assert cfg.extras == {"ablate": {"subsets": "VGGish;VGGSound"}}


def test_experiment_value_coercion():
    sections = bn.parse_config("""
experiment.dataset = synthetic
experiment.arch = moee
experiment.experts = ea
train.flag = true
train.other = False
train.nothing = none
train.count = 12
train.rate = 0.5
train.name = adam
""")
    cfg = bn.experiment_from_sections(sections)
    assert cfg.train == {"flag": True, "other": False, "nothing": None,
                         "count": 12, "rate": 0.5, "name": "adam"}


def test_experiment_rejects_unknown_key():
    sections = bn.parse_config(
        "experiment.dataset = synthetic\nexperiment.arch = moee\n"
        "experiment.experts = ea\nexperiment.bogus = 1\n")
    with pytest.raises(ValueError, match="unknown experiment key 'bogus'"):
        bn.experiment_from_sections(sections)


def test_experiment_requires_dataset_and_arch():
    with pytest.raises(ValueError, match="missing experiment.dataset"):
        bn.experiment_from_sections({"experiment": {"arch": "moee",
                                                    "experts": "ea"}})
    with pytest.raises(ValueError, match="missing experiment.architecture"):
        bn.experiment_from_sections({"experiment": {"dataset": "synthetic",
                                                    "experts": "ea"}})


def test_experiment_overrides_win():
    sections = bn.parse_config(
        "experiment.dataset = synthetic\nexperiment.arch = moee\n"
        "experiment.experts = ea\nexperiment.seeds = 0,1\n")
    cfg = bn.experiment_from_sections(sections, seeds=(7,), architecture="ce",
                                      dataset=None)
    assert cfg.dataset == "synthetic"  # None override is ignored
    assert cfg.architecture == "ce"
    assert cfg.seeds == (7,)


def test_experiment_from_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("experiment.dataset = synthetic\nexperiment.arch = moee\n"
                    "experiment.experts = ea,eb\n")
    cfg = bn.experiment_from_file(path)
    assert cfg.experts == ("ea", "eb")


# ---------------------------------------------------------------------------
# experiment configs and run keys


def test_config_validation_errors():
    with pytest.raises(ValueError, match="non-empty"):
        tiny_config("runs", experts=())
    with pytest.raises(ValueError, match="duplicate expert"):
        tiny_config("runs", experts=("ea", "ea"))
    with pytest.raises(ValueError, match="seeds must be distinct"):
        tiny_config("runs", seeds=(0, 0))
    with pytest.raises(ValueError, match="unknown architecture"):
        tiny_config("runs", architecture="transformer")
    with pytest.raises(ValueError, match="unknown dataset"):
        tiny_config("runs", dataset="esc50")


def test_run_key_stable_and_sensitive():
    a = tiny_config("runs")
    b = tiny_config("runs")
    assert a.run_key() == b.run_key()
    assert len(a.run_key()) == 16
    assert set(a.run_key()) <= set("0123456789abcdef")
    assert a.run_key() != tiny_config("runs", train={"epochs": 3}).run_key()
    assert a.run_key() != tiny_config("runs", experts=("ea",)).run_key()
    assert a.run_key() != a.run_key({"fraction": 0.5})


def test_run_key_ignores_seeds_and_out_dir():
    base = tiny_config("runs")
    assert base.run_key() == tiny_config("elsewhere").run_key()
    assert base.run_key() == tiny_config("runs", seeds=(5,)).run_key()


def test_canonical_lines_sorted_and_complete():
    lines = tiny_config("runs").canonical_lines()
    assert lines == sorted(lines)
    assert "dataset=synthetic" in lines
    assert "experts=ea,eb" in lines
    assert "train.epochs=2" in lines


# ---------------------------------------------------------------------------
# data bundles


def test_synthetic_bundle_shape(bundle):
    assert len(bundle.corpus.split_ids("train")) == 48
    assert len(bundle.corpus.split_ids("val")) == 48
    assert len(bundle.corpus.split_ids("test")) == 16
    assert bundle.expert_dims == {"ea": 12, "eb": 8}
    assert bundle.text_dim == 10
    assert bundle.store.has("t0000", "ea")


def test_synthetic_mirrors_share_content(bundle):
    corpus, store = bundle.corpus, bundle.store
    texts = {c.caption_id: c.text for c in corpus.captions}
    assert texts["c-v0007"] == texts["c-t0007"]
    assert texts["c-s0003"] == texts["c-t0003"]
    np.testing.assert_array_equal(store.fetch("v0007", "ea").matrix,
                                  store.fetch("t0007", "ea").matrix)
    np.testing.assert_array_equal(store.fetch("s0003", "eb").matrix,
                                  store.fetch("t0003", "eb").matrix)


def test_synthetic_reuses_supplied_generative_link():
    rng = np.random.default_rng(0)
    table = make_word_table(rng)
    first = make_synthetic_benchmark(rng, n_pairs=4, word_table=table)
    second = make_synthetic_benchmark(np.random.default_rng(1), n_pairs=4,
                                      word_table=table, maps=first.maps)
    assert second.word_table is table
    for name in first.maps:
        np.testing.assert_array_equal(second.maps[name], first.maps[name])
    with pytest.raises(ValueError, match="at least 2 pairs"):
        make_synthetic_benchmark(np.random.default_rng(0), n_pairs=1)


def test_load_data_synthetic_ignores_environment(monkeypatch):
    monkeypatch.delenv(bn.DATA_ENV, raising=False)
    monkeypatch.delenv(bn.FEATURES_ENV, raising=False)
    data = bn.load_data(tiny_config("runs"))
    assert len(data.corpus.split_ids("train")) == 48


def test_load_data_real_dataset_needs_roots(monkeypatch):
    monkeypatch.delenv(bn.DATA_ENV, raising=False)
    monkeypatch.delenv(bn.FEATURES_ENV, raising=False)
    cfg = tiny_config("runs", dataset="audiocaps", experts=("VGGish",))
    with pytest.raises(RuntimeError, match="AUDIORET_DATA_ROOT"):
        bn.load_data(cfg)


# ---------------------------------------------------------------------------
# per-seed config assembly


def test_build_configs_architecture_defaults():
    train_cfg, loss_cfg = bn._build_configs(
        tiny_config("runs", train={}, loss={}), seed=4)
    assert (train_cfg.epochs, train_cfg.steps) == (20, None)
    assert train_cfg.optimizer == "lookahead_radam"
    assert (train_cfg.lr, train_cfg.weight_decay) == (0.01, 0.001)
    assert train_cfg.seed == 4
    assert (loss_cfg.margin, loss_cfg.batch_size) == (0.2, 128)

    train_cfg, loss_cfg = bn._build_configs(
        tiny_config("runs", architecture="mmt", train={}, loss={}), seed=0)
    assert (train_cfg.epochs, train_cfg.steps) == (None, 50_000)
    assert train_cfg.optimizer == "adam"
    assert train_cfg.lr == 5e-5
    assert train_cfg.decay_every_steps == 1000
    assert (loss_cfg.margin, loss_cfg.batch_size) == (0.05, 32)


def test_build_configs_budget_type_switch():
    train_cfg, _ = bn._build_configs(
        tiny_config("runs", train={"steps": 10}), seed=0)
    assert (train_cfg.epochs, train_cfg.steps) == (None, 10)
    train_cfg, _ = bn._build_configs(
        tiny_config("runs", architecture="mmt", train={"epochs": 1}), seed=0)
    assert (train_cfg.epochs, train_cfg.steps) == (1, None)


def test_build_configs_fills_dataset_caps():
    cfg = tiny_config("runs", dataset="audiocaps", experts=("VGGish",),
                      train={"epochs": 1})
    train_cfg, _ = bn._build_configs(cfg, seed=0)
    assert train_cfg.word_cap == 52
    assert train_cfg.frame_caps == {"VGGish": 10}  # other experts filtered out

    train_cfg, _ = bn._build_configs(tiny_config("runs"), seed=0)
    assert train_cfg.word_cap is None and train_cfg.frame_caps == {}


def test_build_model_rejects_unavailable_expert(bundle):
    cfg = tiny_config("runs", experts=("ea", "zz"))
    with pytest.raises(ValueError, match="expert not available .* 'zz'"):
        bn._build_model(cfg, bundle, seed=0)


# ---------------------------------------------------------------------------
# run directories and tables


def test_run_dir_writes_canonical_config(tmp_path):
    cfg = tiny_config(tmp_path)
    run_dir = bn.RunDir(cfg, {"fraction": 0.5})
    text = (run_dir.path / "config.txt").read_text()
    assert text == "\n".join(cfg.canonical_lines({"fraction": 0.5})) + "\n"
    assert run_dir.path.name == cfg.run_key({"fraction": 0.5})


def test_run_dir_seed_round_trip(tmp_path):
    run_dir = bn.RunDir(tiny_config(tmp_path))
    assert run_dir.load_seed(0) is None
    run_dir.store_seed(0, {"seed": 0, "value": 1.5})
    assert run_dir.load_seed(0) == {"seed": 0, "value": 1.5}
    assert not list(run_dir.path.glob("*.tmp"))


def test_cell_mean_unknown_label(rig):
    _, table = rig
    with pytest.raises(KeyError):
        table.cell_mean("nonexistent", "t2a", "R@1")


# ---------------------------------------------------------------------------
# benchmark runs


def test_benchmark_row_and_artifacts(rig):
    cfg, table = rig
    assert [row.label for row in table.rows] == ["synthetic/moee"]
    entry = table.rows[0].by_direction["t2a"]
    assert isinstance(entry, SeedAggregate) and entry.runs == 2
    run_path = Path(cfg.out_dir) / cfg.run_key()
    for name in ("config.txt", "seed0.json", "seed1.json",
                 "table.txt", "table.csv"):
        assert (run_path / name).exists()
    payload = json.loads((run_path / "seed0.json").read_text())
    assert payload["seed"] == 0
    assert set(payload) == {"seed", "selection_score", "best_step",
                            "t2a", "a2t", "log"}
    assert (run_path / "table.txt").read_text() == table.to_text()
    assert (run_path / "table.csv").read_text() == table.to_csv()


def test_benchmark_rerun_hits_cache_bitwise(rig, bundle):
    cfg, table = rig
    again = bn.run_benchmark(cfg, data=bundle)
    assert again.to_csv() == table.to_csv()
    assert again.to_text() == table.to_text()


def test_benchmark_table_is_built_from_stored_artifacts(rig, bundle, tmp_path):
    cfg, _ = rig
    src = Path(cfg.out_dir) / cfg.run_key()
    shutil.copytree(src, tmp_path / cfg.run_key())
    moved = replace(cfg, out_dir=str(tmp_path))

    artifact = tmp_path / cfg.run_key() / "seed0.json"
    payload = json.loads(artifact.read_text())
    payload["t2a"]["R@1"] = 7.0  # stays below R@5, so the report is valid
    artifact.write_text(json.dumps(payload))

    table = bn.run_benchmark(moved, data=bundle)
    seed1 = json.loads((tmp_path / cfg.run_key() / "seed1.json").read_text())
    expected = (7.0 + seed1["t2a"]["R@1"]) / 2.0
    assert table.cell_mean("synthetic/moee", "t2a", "R@1") == pytest.approx(expected)


def test_benchmark_single_seed_row_is_plain_report(bundle, tmp_path, rig):
    cfg, _ = rig
    solo = replace(cfg, seeds=(0,), out_dir=str(tmp_path))
    shutil.copytree(Path(cfg.out_dir) / cfg.run_key(), tmp_path / cfg.run_key())
    table = bn.run_benchmark(solo, data=bundle)
    entry = table.rows[0].by_direction["t2a"]
    assert isinstance(entry, MetricsReport)
    cached = json.loads((tmp_path / cfg.run_key() / "seed0.json").read_text())
    assert entry.r1 == cached["t2a"]["R@1"]


def test_evaluate_checkpoint_reports_both_directions(frozen_ckpt, bundle):
    reports = bn.evaluate_checkpoint(frozen_ckpt, bundle)
    assert set(reports) == {"t2a", "a2t"}
    for rep in reports.values():
        assert rep.pool_size == 16 and rep.query_count == 16
        assert 0.0 <= rep.r1 <= rep.r5 <= 100.0


# ---------------------------------------------------------------------------
# studies


def test_ablation_rows_reuse_benchmark_artifacts(rig, bundle):
    cfg, table = rig
    ab = bn.run_ablation(cfg, [("ea",), ("eb",), ("ea", "eb")], data=bundle)
    assert [row.label for row in ab.rows] == ["ea", "eb", "ea+eb"]
    # the full subset shares its run directory with the plain benchmark,
    # so its row must be identical, not merely close
    assert ab.rows[2].by_direction == table.rows[0].by_direction
    study_dir = Path(cfg.out_dir) / cfg.run_key(
        {"study": "ablation", "subsets": [["ea"], ["eb"], ["ea", "eb"]]})
    assert (study_dir / "table.txt").exists()


def test_ablation_requires_subsets(rig, bundle):
    cfg, _ = rig
    with pytest.raises(ValueError, match="no expert subsets"):
        bn.run_ablation(cfg, [], data=bundle)


def test_ablation_unknown_expert(rig, bundle):
    cfg, _ = rig
    with pytest.raises(ValueError, match="expert not available"):
        bn.run_ablation(cfg, [("zz",)], data=bundle)


def test_transfer_rows_and_scratch_cache(rig, bundle):
    cfg, _ = rig
    solo = replace(cfg, seeds=(0,))
    source = bn.synthetic_bundle(seed=4321)
    with pytest.warns(UserWarning, match="source equals target"):
        table = bn.run_transfer(solo, "synthetic", data=bundle,
                                source_data=source)
    assert [row.label for row in table.rows] == ["synthetic/scratch",
                                                 "synthetic→synthetic"]
    cached = json.loads((Path(cfg.out_dir) / cfg.run_key() /
                         "seed0.json").read_text())
    for column in COLUMNS:
        assert table.cell_mean("synthetic/scratch", "t2a", column) == \
            cached["t2a"][column]
    assert np.isfinite(table.cell_mean("synthetic→synthetic", "t2a", "R@1"))


def test_scale_full_fraction_shares_benchmark_run(rig, bundle):
    cfg, _ = rig
    solo = replace(cfg, seeds=(0,))
    table = bn.run_scale_study(solo, fractions=(0.5, 1.0), data=bundle)
    assert [row.label for row in table.rows] == ["frac=0.5 (n=24)",
                                                 "frac=1 (n=48)"]
    cached = json.loads((Path(cfg.out_dir) / cfg.run_key() /
                         "seed0.json").read_text())
    for column in COLUMNS:
        assert table.cell_mean("frac=1 (n=48)", "t2a", column) == \
            cached["t2a"][column]


def test_scale_rejects_bad_fraction(rig, bundle):
    cfg, _ = rig
    with pytest.raises(ValueError, match="fraction"):
        bn.run_scale_study(cfg, fractions=(0.0,), data=bundle)


# ---------------------------------------------------------------------------
# training-set subsampling


def test_subsample_full_fraction_is_identity(bundle):
    sub = bn.subsample_train(bundle.corpus, 1.0, seed=0)
    assert [s.sample_id for s in sub.samples] == \
        [s.sample_id for s in bundle.corpus.samples]
    assert [c.caption_id for c in sub.captions] == \
        [c.caption_id for c in bundle.corpus.captions]


def test_subsample_counts_and_nesting(bundle):
    kept = {}
    for fraction in (0.25, 0.5, 1.0):
        sub = bn.subsample_train(bundle.corpus, fraction, seed=9)
        ids = set(sub.split_ids("train"))
        assert len(ids) == int(fraction * 48)
        kept[fraction] = ids
    assert kept[0.25] <= kept[0.5] <= kept[1.0]


def test_subsample_preserves_other_splits_and_captions(bundle):
    sub = bn.subsample_train(bundle.corpus, 0.25, seed=9)
    assert sub.split_ids("val") == bundle.corpus.split_ids("val")
    assert sub.split_ids("test") == bundle.corpus.split_ids("test")
    surviving = {s.sample_id for s in sub.samples}
    assert all(c.sample_id in surviving for c in sub.captions)
    # dropped training samples lose their captions too
    dropped = set(bundle.corpus.split_ids("train")) - set(sub.split_ids("train"))
    assert dropped
    assert not any(c.sample_id in dropped for c in sub.captions)


def test_subsample_is_seed_deterministic(bundle):
    first = bn.subsample_train(bundle.corpus, 0.5, seed=3)
    second = bn.subsample_train(bundle.corpus, 0.5, seed=3)
    assert first.split_ids("train") == second.split_ids("train")
    other = bn.subsample_train(bundle.corpus, 0.5, seed=4)
    assert first.split_ids("train") != other.split_ids("train")


def test_subsample_rejects_bad_fraction(bundle):
    for fraction in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError, match="fraction"):
            bn.subsample_train(bundle.corpus, fraction, seed=0)


# ---------------------------------------------------------------------------
# search


def test_search_returns_ordered_pool_permutation(frozen_ckpt, bundle):
    searcher = bn.Searcher(frozen_ckpt, bundle.corpus, bundle.store,
                           bundle.text_source)
    hits = searcher.search("w001 w002 w003", top_k=1000)
    assert sorted(sid for sid, _ in hits) == sorted(searcher.pool_ids)
    for (id1, s1), (id2, s2) in zip(hits, hits[1:]):
        assert s1 > s2 or (s1 == s2 and id1 < id2)
    assert all(-1.0 <= s <= 1.0 for _, s in hits)


def test_search_repeat_is_identical(frozen_ckpt, bundle):
    searcher = bn.Searcher(frozen_ckpt, bundle.corpus, bundle.store,
                           bundle.text_source)
    assert searcher.search("w005 w009", top_k=5) == \
        searcher.search("w005 w009", top_k=5)


def test_search_truncates_to_top_k(frozen_ckpt, bundle):
    searcher = bn.Searcher(frozen_ckpt, bundle.corpus, bundle.store,
                           bundle.text_source)
    full = searcher.search("w001", top_k=16)
    assert searcher.search("w001", top_k=3) == full[:3]


def test_search_rejects_bad_input(frozen_ckpt, bundle):
    searcher = bn.Searcher(frozen_ckpt, bundle.corpus, bundle.store,
                           bundle.text_source)
    with pytest.raises(ValueError, match="empty query"):
        searcher.search("   ")
    with pytest.raises(ValueError, match="top_k"):
        searcher.search("w001", top_k=0)


def test_search_scores_match_similarity_matrix(frozen_ckpt, bundle):
    searcher = bn.Searcher(frozen_ckpt, bundle.corpus, bundle.store,
                           bundle.text_source)
    model = frozen_ckpt.rebuild()
    _, texts, clips = tr.stage_split(bundle.corpus, "test", bundle.store,
                                     bundle.text_source, ("ea", "eb"),
                                     frozen_ckpt.train_config)
    pool = sorted(clips)
    caption = next(c for c in bundle.corpus.captions
                   if c.caption_id == "c-s0000")
    sim = similarity_matrix(model, [texts["c-s0000"]],
                            [clips[sid] for sid in pool])
    by_id = dict(searcher.search(caption.text, top_k=len(pool)))
    for j, sid in enumerate(pool):
        assert by_id[sid] == sim.values[0, j]


def test_one_shot_search_matches_session(frozen_ckpt, bundle):
    session = bn.Searcher(frozen_ckpt, bundle.corpus, bundle.store,
                          bundle.text_source).search("w010 w011", top_k=4)
    one_shot = bn.search(frozen_ckpt, bundle.corpus, bundle.store,
                         bundle.text_source, "w010 w011", top_k=4)
    assert one_shot == session


# ---------------------------------------------------------------------------
# command line


def _write_experiment_cfg(path, out_dir, seeds="0,1", extra=""):
    path.write_text(
        "experiment.dataset = synthetic\n"
        "experiment.arch = moee\n"
        "experiment.experts = ea,eb\n"
        f"experiment.seeds = {seeds}\n"
        f"experiment.out = {out_dir}\n"
        "train.epochs = 2\n"
        "loss.batch_size = 8\n"
        "model.text_clusters = 2\n"
        "model.text_ghost = 1\n"
        "model.audio_clusters = 2\n"
        "model.audio_ghost = 0\n"
        "model.joint_dim = 8\n"
        + extra)


def test_cli_benchmark_from_config_reuses_cache(rig, tmp_path, capsys):
    cfg, table = rig
    cfg_path = tmp_path / "exp.cfg"
    _write_experiment_cfg(cfg_path, cfg.out_dir)
    assert cli_main(["benchmark", "--config", str(cfg_path)]) == 0
    assert capsys.readouterr().out == table.to_text()


def test_cli_seed_flag_overrides_config(rig, tmp_path, capsys):
    cfg, _ = rig
    cfg_path = tmp_path / "exp.cfg"
    _write_experiment_cfg(cfg_path, cfg.out_dir)
    assert cli_main(["benchmark", "--config", str(cfg_path),
                     "--seeds", "0"]) == 0
    out = capsys.readouterr().out
    assert "synthetic/moee" in out
    assert "±" not in out  # a single seed renders plain values


def test_cli_scale_from_config(rig, tmp_path, capsys):
    cfg, _ = rig
    cfg_path = tmp_path / "exp.cfg"
    _write_experiment_cfg(cfg_path, cfg.out_dir, seeds="0",
                          extra="scale.fractions = 1.0\n")
    assert cli_main(["scale", "--config", str(cfg_path)]) == 0
    assert "frac=1 (n=48)" in capsys.readouterr().out


def test_cli_ablate_needs_subsets(rig, tmp_path, capsys):
    cfg, _ = rig
    cfg_path = tmp_path / "exp.cfg"
    _write_experiment_cfg(cfg_path, cfg.out_dir)
    assert cli_main(["ablate", "--config", str(cfg_path)]) == 2
    assert "ablate.subsets" in capsys.readouterr().err


def test_cli_transfer_needs_source(rig, tmp_path, capsys):
    cfg, _ = rig
    cfg_path = tmp_path / "exp.cfg"
    _write_experiment_cfg(cfg_path, cfg.out_dir)
    assert cli_main(["transfer", "--config", str(cfg_path)]) == 2
    assert "transfer.source" in capsys.readouterr().err


def test_cli_reports_errors_with_exit_one(capsys):
    rc = cli_main(["benchmark", "--dataset", "esc50", "--arch", "moee",
                   "--experts", "ea"])
    assert rc == 1
    assert "error: unknown dataset" in capsys.readouterr().err


def test_cli_search_prints_ranked_hits(frozen_ckpt, tmp_path, capsys):
    ckpt_path = tmp_path / "model.zip"
    save_checkpoint(frozen_ckpt, ckpt_path)
    rc = cli_main(["search", "w001 w004", "quiet rain", "--checkpoint",
                   str(ckpt_path), "--dataset", "synthetic", "--top-k", "3"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.count("query:") == 2
    hit_lines = [line for line in out.splitlines()
                 if line.strip().startswith(("1.", "2.", "3."))]
    assert len(hit_lines) == 6
    assert all(" s" in line for line in hit_lines)  # synthetic test pool ids


def test_cli_build_sounddescs_and_stats(tmp_path, capsys, monkeypatch):
    index = tmp_path / "index.tsv"
    index.write_text("".join(f"clip{i:03d}\t{10.0 + i}\ttag{i % 3}\n"
                             for i in range(30)))
    desc = tmp_path / "desc.tsv"
    desc.write_text("".join(f"clip{i:03d}\ta recording of machine {i}\n"
                            for i in range(28)))
    out_root = tmp_path / "data" / "sounddescs"
    rc = cli_main(["build-sounddescs", str(index), str(desc),
                   "--out", str(out_root), "--seed", "3"])
    assert rc == 0
    built = capsys.readouterr().out
    assert "kept 28 of 30" in built
    assert (out_root / "index.tsv").exists()
    assert (out_root / "splits" / "train.txt").exists()

    rc = cli_main(["stats", "--dataset", "sounddescs", "--root", str(out_root)])
    assert rc == 0
    stats_out = capsys.readouterr().out
    assert "sounddescs" in stats_out
    assert "28" in stats_out

    # the environment root is the default parent directory
    monkeypatch.setenv(bn.DATA_ENV, str(tmp_path / "data"))
    rc = cli_main(["stats", "--dataset", "sounddescs"])
    assert rc == 0
    assert capsys.readouterr().out == stats_out
