"""
datafile.py
- dataset files: one chain per line, u/f/d letters, a tab, then the 0/1 label
- provenance sidecar <file>.meta.json (sizes, mu, fraction, seed, content sha1)
- reading validates every line and reports the first bad one by number
"""

from __future__ import annotations

import json
from hashlib import sha1
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from motzkin_tn.errors import DatasetError
from motzkin_tn.motzkin import LabeledDataset, decode_chain, encode_chain, is_valid, motzkin_number

PathLike = Union[str, Path]


def sidecar_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def dataset_text(ds: LabeledDataset) -> str:
    return "".join(f"{decode_chain(row)}\t{int(y)}\n" for row, y in zip(ds.codes, ds.labels))


def write_dataset(ds: LabeledDataset, path: PathLike) -> Dict[str, Any]:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    text = dataset_text(ds)
    with open(p, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)

    n_valid = int(ds.labels.sum())
    meta = {
        "n": ds.n,
        "lines": len(ds),
        "valid": n_valid,
        "invalid": len(ds) - n_valid,
        "motzkin_number": motzkin_number(ds.n),
        "mu": ds.mu,
        "train_fraction": ds.train_fraction,
        "seed": ds.seed,
        "sha1": sha1(text.encode("utf-8")).hexdigest(),
    }
    with open(sidecar_path(p), "w", encoding="utf-8") as f:
        f.write(json.dumps(meta, ensure_ascii=False, indent=2))
    return meta


def read_dataset(path: PathLike, n: Optional[int] = None) -> LabeledDataset:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"dataset file not found: {p}")

    rows, labels = [], []
    with open(p, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            chain_text, sep, label_text = line.partition("\t")
            if not sep or label_text not in ("0", "1"):
                raise DatasetError(f"{p.name} line {lineno}: expected '<chain>\\t<0|1>', got {line!r}")
            try:
                chain = encode_chain(chain_text, n)
            except DatasetError as e:
                raise DatasetError(f"{p.name} line {lineno}: {e}") from None
            if n is None:
                n = len(chain)
            label = int(label_text)
            if label != int(is_valid(chain)):
                raise DatasetError(f"{p.name} line {lineno}: label {label} disagrees with chain {chain_text!r}")
            rows.append(chain)
            labels.append(label)
    if not rows:
        raise DatasetError(f"dataset file is empty: {p}")

    meta: Dict[str, Any] = {}
    side = sidecar_path(p)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
    labels_arr = np.array(labels, dtype=np.uint8)
    return LabeledDataset(
        codes=np.array(rows, dtype=np.uint8),
        labels=labels_arr,
        n=int(n),
        mu=float(meta.get("mu", labels_arr.mean())),
        train_fraction=float(meta.get("train_fraction", len(rows) / motzkin_number(int(n)))),
        seed=int(meta.get("seed", 0)),
    )


def main() -> None:
    from motzkin_tn.motzkin import build_dataset

    ds = build_dataset(4, train_fraction=1.0, mu=1.0, seed=0)
    print("=== datafile.main() ===")
    print(dataset_text(ds), end="")


if __name__ == "__main__":
    main()
