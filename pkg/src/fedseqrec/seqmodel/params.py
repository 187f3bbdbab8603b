"""Parameter container, initialisation and checkpoint I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("gru", "sasrec")
MAGIC = "FEDSEQREC-CKPT-1"
INIT_CORE_STREAM, INIT_ADAPTER_STREAM = 8, 9


@dataclass
class ModelParams:
    """All trainable arrays of one recommender, in a fixed field order.

    ``item_emb`` is the ID table, ``phi_*`` the adapter fusing service item
    embeddings into it, ``psi_*`` the projection used by the contrastive view.
    """

    kind: str
    num_items: int
    dim: int
    llm_dim: int
    depth: int = 1
    max_len: int = 50
    arrays: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.arrays[name] = value

    def names(self) -> list[str]:
        return list(self.arrays)

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.num_items, self.dim, self.llm_dim, self.depth,
                           self.max_len, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def header(self) -> dict:
        return {
            "format": MAGIC,
            "kind": self.kind,
            "num_items": self.num_items,
            "dim": self.dim,
            "llm_dim": self.llm_dim,
            "depth": self.depth,
            "max_len": self.max_len,
            "fields": [[k, list(v.shape)] for k, v in self.arrays.items()],
        }

    def same_layout(self, other: "ModelParams") -> bool:
        return self.header() == other.header()

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def allclose(self, other: "ModelParams", **kw) -> bool:
        return self.same_layout(other) and all(
            np.allclose(self.arrays[k], other.arrays[k], **kw) for k in self.arrays)

    def equal(self, other: "ModelParams") -> bool:
        return self.same_layout(other) and all(
            np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(kind: str, num_items: int, dim: int = 8, llm_dim: int = 64, depth: int = 1,
                max_len: int = 50, seed: int = 0, fuse: bool = True) -> ModelParams:
    """Random initialisation.

    Core arrays and the adapters draw from separate streams so toggling the
    fusion adapter never shifts the core initialisation. With ``fuse=False``
    the item adapter starts at zero.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    # nonzero tags: numpy seeds ignore trailing zeros, so [seed, 0] would replay default_rng(seed)
    core = np.random.default_rng([seed, INIT_CORE_STREAM])
    side = np.random.default_rng([seed, INIT_ADAPTER_STREAM])
    d = dim
    a: dict[str, np.ndarray] = {}
    a["item_emb"] = core.normal(0.0, 1.0 / np.sqrt(d), size=(num_items, d))
    if kind == "gru":
        for layer in range(depth):
            a[f"gru{layer}.w_x"] = _uniform(core, d, (d, 3 * d))
            a[f"gru{layer}.w_h"] = _uniform(core, d, (d, 3 * d))
            a[f"gru{layer}.b_x"] = _uniform(core, d, (3 * d,))
            a[f"gru{layer}.b_h"] = _uniform(core, d, (3 * d,))
        a["out_w"] = core.normal(0.0, 1.0 / np.sqrt(d), size=(num_items, d))
        a["out_b"] = np.zeros(num_items)
    else:
        a["pos_emb"] = core.normal(0.0, 1.0 / np.sqrt(d), size=(max_len, d))
        for b in range(depth):
            p = f"blk{b}."
            for name in ("wq", "wk", "wv", "wo"):
                a[p + name] = _uniform(core, d, (d, d))
            a[p + "ln1_g"] = np.ones(d)
            a[p + "ln1_b"] = np.zeros(d)
            a[p + "ff_w1"] = _uniform(core, d, (d, d))
            a[p + "ff_b1"] = _uniform(core, d, (d,))
            a[p + "ff_w2"] = _uniform(core, d, (d, d))
            a[p + "ff_b2"] = _uniform(core, d, (d,))
            a[p + "ln2_g"] = np.ones(d)
            a[p + "ln2_b"] = np.zeros(d)
    phi_w = _uniform(side, llm_dim, (d, llm_dim))
    a["phi_w"] = phi_w if fuse else np.zeros_like(phi_w)
    a["phi_b"] = np.zeros(d)
    a["psi_w"] = _uniform(side, llm_dim, (d, llm_dim))
    a["psi_b"] = np.zeros(d)
    return ModelParams(kind, num_items, dim, llm_dim, depth, max_len, a)


def save_checkpoint(params: ModelParams, path) -> None:
    """JSON header line, then the float64 little-endian payload in field order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(params.header(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    if header.get("format") != MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    arrays, off = {}, 0
    for name, shape in header["fields"]:
        n = int(np.prod(shape)) if shape else 1
        if off + n > flat.size:
            raise ValueError(f"{path}: truncated payload")
        arrays[name] = flat[off:off + n].reshape(shape).copy()
        off += n
    if off != flat.size:
        raise ValueError(f"{path}: trailing payload")
    return ModelParams(header["kind"], header["num_items"], header["dim"], header["llm_dim"],
                       header["depth"], header["max_len"], arrays)
