"""Checkpoint archives: one zip holding a JSON manifest plus parameter
tensors in the feature store's binary matrix format (float32).

Tensors of any rank are stored as 2-D matrices (leading axis kept, the
rest flattened); the manifest records every true shape, the model
hyperparameters, the training configuration, and the validation history,
so an archive alone is enough to rebuild and requery the model.
"""

from __future__ import annotations

import json
import struct
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .evaluation import MetricsReport
from .experts import MAGIC
from .training import Checkpoint, TrainConfig

FORMAT = "audioret-checkpoint"
VERSION = 1


def _encode_matrix(array: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(array, dtype="<f4")
    flat = flat.reshape(1, -1) if flat.ndim < 2 else flat.reshape(flat.shape[0], -1)
    return MAGIC + struct.pack("<II", *flat.shape) + flat.tobytes()


def _decode_matrix(blob: bytes, shape: tuple[int, ...]) -> np.ndarray:
    if blob[:6] != MAGIC:
        raise ValueError("bad magic in checkpoint tensor")
    rows, cols = struct.unpack("<II", blob[6:14])
    if len(blob) != 14 + rows * cols * 4:
        raise ValueError("truncated checkpoint tensor")
    values = np.frombuffer(blob[14:], dtype="<f4").astype(np.float64)
    if values.size != int(np.prod(shape)):
        raise ValueError("checkpoint tensor does not match manifest shape")
    return values.reshape(shape)


def save_checkpoint(ckpt: Checkpoint, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "architecture": ckpt.architecture,
        "experts": list(ckpt.model_config["experts"]),
        "model_config": ckpt.model_config,
        "train_config": asdict(ckpt.train_config),
        "seed": ckpt.train_config.seed,
        "selection_score": ckpt.selection_score,
        "best_step": ckpt.best_step,
        "history": [[step, rep.by_column() | {
            "pool_size": rep.pool_size, "query_count": rep.query_count}]
            for step, rep in ckpt.history],
        "tensors": {name: list(arr.shape) for name, arr in ckpt.params.items()},
    }
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        archive.writestr("manifest.json", json.dumps(manifest, indent=1,
                                                     sort_keys=True))
        for name, arr in sorted(ckpt.params.items()):
            archive.writestr(f"params/{name}.mat", _encode_matrix(arr))
    tmp.replace(path)
    return path


def _report_from_dict(d: dict) -> MetricsReport:
    return MetricsReport(d["R@1"], d["R@5"], d["R@10"], d["R@50"],
                         d["medR"], d["meanR"], pool_size=int(d["pool_size"]),
                         query_count=int(d["query_count"]))


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    if not zipfile.is_zipfile(path):
        raise ValueError(f"not a checkpoint archive: {path}")
    with zipfile.ZipFile(path) as archive:
        names = set(archive.namelist())
        if "manifest.json" not in names:
            raise ValueError(f"not a checkpoint archive (no manifest): {path}")
        manifest = json.loads(archive.read("manifest.json"))
        if manifest.get("format") != FORMAT:
            raise ValueError(f"not a checkpoint archive: {path}")
        if manifest.get("version") != VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{manifest.get('version')!r}")
        params = {}
        for name, shape in manifest["tensors"].items():
            member = f"params/{name}.mat"
            if member not in names:
                raise ValueError(f"checkpoint tensor missing: {name}")
            params[name] = _decode_matrix(archive.read(member), tuple(shape))
    cfg_dict = manifest["train_config"]
    cfg_dict["frame_caps"] = {k: int(v)
                              for k, v in (cfg_dict.get("frame_caps") or {}).items()}
    train_config = TrainConfig(**cfg_dict)
    history = [(int(step), _report_from_dict(rep))
               for step, rep in manifest["history"]]
    return Checkpoint(manifest["architecture"], manifest["model_config"],
                      params, train_config, history,
                      float(manifest["selection_score"]),
                      int(manifest["best_step"]))
