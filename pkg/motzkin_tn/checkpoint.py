"""
checkpoint.py
- binary model checkpoints:
    b"TNMPS1\\n"
    b"manifest_bytes=<N>\\n"
    <N bytes of JSON manifest, keys sorted>
    <payload: little-endian float64 blocks in manifest order, row-major>
- the manifest names every block with its shape; loading checks shape products against the payload
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from motzkin_tn.baseline import PARAM_NAMES, MlpModel
from motzkin_tn.config import TrainConfig, config_hash
from motzkin_tn.errors import CheckpointError, ShapeError
from motzkin_tn.factored import FactoredCore, FactoredMPS, position_of
from motzkin_tn.mps import DenseMPS
from motzkin_tn.records import now_iso_local

MAGIC = b"TNMPS1\n"
LENGTH_KEY = b"manifest_bytes="
UNRECORDED = "unrecorded"

Model = Union[DenseMPS, FactoredMPS, MlpModel]
PathLike = Union[str, Path]


def model_kind(model: Model) -> str:
    if isinstance(model, DenseMPS):
        return "dense"
    if isinstance(model, FactoredMPS):
        return "skip" if model.skip else "factored"
    if isinstance(model, MlpModel):
        return "mlp"
    raise TypeError(f"not a model: {type(model).__name__}")


def _blocks(model: Model) -> List[Tuple[str, np.ndarray]]:
    if isinstance(model, DenseMPS):
        return [(f"core_{i}", c) for i, c in enumerate(model.cores)]
    if isinstance(model, FactoredMPS):
        return [
            (f"core_{i}_sub_{k}", s)
            for i, core in enumerate(model.cores)
            for k, s in enumerate(core.subcores)
        ]
    return [(name, getattr(model, name)) for name in PARAM_NAMES]


def _dims(model: Model) -> Dict[str, Any]:
    if isinstance(model, DenseMPS):
        return {"n": model.n, "v": model.v, "chi": model.chi}
    if isinstance(model, FactoredMPS):
        return {"n": model.n, "v": model.v, "chi_h": model.chi_h, "chi_v": model.chi_v,
                "height": model.h, "skip": model.skip}
    return {"n": model.n, "v": model.v, "d_e": model.d_e, "d_h": model.d_h}


def to_bytes(
    model: Model,
    seed: Optional[int] = None,
    config: Optional[TrainConfig] = None,
    record_timestamps: bool = False,
    extra: Optional[Dict[str, Any]] = None,
) -> bytes:
    blocks = _blocks(model)
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C") for _, arr in blocks)
    manifest = {
        "format": MAGIC.decode("ascii").strip(),
        "model_kind": model_kind(model),
        "dims": _dims(model),
        "blocks": [{"name": name, "shape": list(arr.shape)} for name, arr in blocks],
        "seed": seed,
        "config": asdict(config) if config is not None else None,
        "config_hash": config_hash(config) if config is not None else None,
        "created_at": now_iso_local() if record_timestamps else UNRECORDED,
        "payload_bytes": len(payload),
    }
    if extra:
        manifest["extra"] = extra
    head = json.dumps(manifest, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return MAGIC + LENGTH_KEY + str(len(head)).encode("ascii") + b"\n" + head + payload


def save_checkpoint(model: Model, path: PathLike, **kwargs) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "wb") as f:
        f.write(to_bytes(model, **kwargs))
    return p


def _parse(data: bytes) -> Tuple[Dict[str, Any], List[np.ndarray]]:
    if not data.startswith(MAGIC):
        found = data[: len(MAGIC)].rstrip(b"\n")
        raise CheckpointError(f"bad magic {found!r}, expected {MAGIC.strip()!r}")
    rest = data[len(MAGIC):]
    line, sep, rest = rest.partition(b"\n")
    if not sep or not line.startswith(LENGTH_KEY):
        raise CheckpointError("missing manifest_bytes header line")
    try:
        head_len = int(line[len(LENGTH_KEY):])
    except ValueError:
        raise CheckpointError(f"bad manifest length {line!r}") from None
    if head_len < 0 or head_len > len(rest):
        raise CheckpointError(f"manifest length {head_len} exceeds file size")
    try:
        manifest = json.loads(rest[:head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable manifest: {e}") from None

    payload = rest[head_len:]
    declared = int(manifest.get("payload_bytes", -1))
    expected = 8 * sum(math.prod(b["shape"]) for b in manifest.get("blocks", []))
    if declared != expected:
        raise CheckpointError(f"manifest declares {declared} payload bytes but its shapes need {expected}")
    if len(payload) != expected:
        raise CheckpointError(f"payload is {len(payload)} bytes, manifest needs {expected}")

    arrays: List[np.ndarray] = []
    offset = 0
    for block in manifest["blocks"]:
        count = math.prod(block["shape"])
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64)
        arrays.append(arr.reshape(block["shape"]))
        offset += 8 * count
    return manifest, arrays


def from_bytes(data: bytes) -> Tuple[Model, Dict[str, Any]]:
    manifest, arrays = _parse(data)
    kind = manifest.get("model_kind")
    dims = manifest.get("dims", {})
    try:
        if kind == "dense":
            model: Model = DenseMPS(cores=tuple(arrays))
        elif kind in ("factored", "skip"):
            n, h = int(dims["n"]), int(dims["height"])
            if len(arrays) != n * h:
                raise CheckpointError(f"expected {n * h} subcore blocks, found {len(arrays)}")
            cores = tuple(
                FactoredCore(position_kind=position_of(i, n), skip=kind == "skip", subcores=tuple(arrays[i * h:(i + 1) * h]))
                for i in range(n)
            )
            model = FactoredMPS(n=n, v=int(dims["v"]), chi_h=int(dims["chi_h"]), chi_v=int(dims["chi_v"]),
                                h=h, skip=kind == "skip", cores=cores)
        elif kind == "mlp":
            named = {b["name"]: a for b, a in zip(manifest["blocks"], arrays)}
            missing = [name for name in PARAM_NAMES if name not in named]
            if missing:
                raise CheckpointError(f"mlp checkpoint misses blocks {missing}")
            model = MlpModel(n=int(dims["n"]), **{name: named[name] for name in PARAM_NAMES})
        else:
            raise CheckpointError(f"unknown model kind {kind!r}")
    except ShapeError as e:
        raise CheckpointError(f"inconsistent block shapes: {e}") from None
    except KeyError as e:
        raise CheckpointError(f"manifest dims miss {e}") from None
    return model, manifest


def load_checkpoint(path: PathLike) -> Tuple[Model, Dict[str, Any]]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return from_bytes(p.read_bytes())


def config_from_manifest(manifest: Dict[str, Any]) -> Optional[TrainConfig]:
    raw = manifest.get("config")
    return TrainConfig(**raw) if raw else None
