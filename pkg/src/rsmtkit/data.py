"""Random net generation, oracle labeling, and file formats.

Datasets are UTF-8 JSON Lines, one net per line with keys `id`, `degree`,
`pins` and optionally `labels` (canonical node indices of the optimal
Steiner points) and `wl_opt`. Checkpoints are a single JSON document with
every float hex-encoded, so a save/load round trip is bit-exact.

All randomness comes from numpy's PCG64 generator seeded explicitly; the
algorithm is fixed, so regenerating with the same seed is byte-identical
on any platform.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CheckpointFormatError,
    DatasetFormatError,
    DegreeTooLarge,
    DegreeTooSmall,
    UnsupportedVersion,
)
from .gat import GatLayerParams, ModelParams
from .nets import COORDINATE_MAX, Net, NodeKind, build_hanan_grid
from .rsmt import exact_rsmt

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetRecord:
    """One dataset line: a net, optionally with oracle labels."""

    net: Net
    labels: tuple[int, ...] | None = None  # canonical node indices, ascending
    wl_opt: int | None = None

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None and self.wl_opt is not None


@dataclass
class LabeledNet:
    """A net with a full per-node binary label vector (1 = Steiner node)."""

    net: Net
    labels: np.ndarray
    wl_opt: int | None = None

    @classmethod
    def from_record(cls, record: NetRecord) -> "LabeledNet":
        if not record.is_labeled:
            raise DatasetFormatError(f"net {record.net.id!r} has no labels")
        grid = build_hanan_grid(record.net)
        vec = np.zeros(grid.n_nodes, dtype=np.int8)
        vec[list(record.labels)] = 1
        return cls(net=record.net, labels=vec, wl_opt=record.wl_opt)


def random_net(
    degree: int, seed: int, coord_max: int = COORDINATE_MAX, id: str | None = None
) -> Net:
    """Net with `degree` distinct pins uniform on [0, coord_max]^2.

    Coordinate collisions are resampled, so the pin count is exact.
    """
    if degree < 2:
        raise DegreeTooSmall(f"degree {degree} < 2")
    rng = np.random.Generator(np.random.PCG64(seed))
    pins: dict[tuple[int, int], None] = {}
    while len(pins) < degree:
        x, y = rng.integers(0, coord_max + 1, size=2)
        pins.setdefault((int(x), int(y)))
    return Net(id=id if id is not None else f"rnd-d{degree}-s{seed}", pins=list(pins))


def generate_dataset(
    degrees: Sequence[int], nets_per_degree: int, seed: int, coord_max: int = COORDINATE_MAX
) -> list[NetRecord]:
    """Unlabeled random nets, nets_per_degree for each requested degree.

    Each net's pins are drawn from a child seed derived from
    (seed, degree, index), so any net can be regenerated in isolation.
    """
    if not degrees:
        raise ValueError("degrees must be non-empty")
    records = []
    for degree in degrees:
        for i in range(nets_per_degree):
            child = int(np.random.SeedSequence((seed, degree, i)).generate_state(1, np.uint64)[0])
            net = random_net(degree, child, coord_max, id=f"d{degree:02d}-{i:05d}")
            records.append(NetRecord(net=net))
    return records


def label_dataset(records: Sequence[NetRecord], max_degree: int = 9) -> list[NetRecord]:
    """Attach oracle Steiner labels and optimal wirelength to every record.

    Re-labeling an already labeled dataset reproduces it exactly (the
    oracle is deterministic).
    """
    too_large = [r.net.id for r in records if r.net.degree > max_degree]
    if too_large:
        raise DegreeTooLarge(
            f"{len(too_large)} net(s) exceed max_degree {max_degree}: "
            + ", ".join(too_large[:10])
            + ("..." if len(too_large) > 10 else "")
        )
    return [label_record(r, max_degree) for r in records]


def label_record(record: NetRecord, max_degree: int = 9) -> NetRecord:
    solution = exact_rsmt(record.net, max_degree=max_degree)
    return NetRecord(
        net=record.net,
        labels=tuple(solution.steiner_set),
        wl_opt=solution.optimal_wirelength,
    )


def _atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(records: Iterable[NetRecord], path: str | Path) -> None:
    lines = []
    for r in records:
        obj: dict = {
            "id": r.net.id,
            "degree": r.net.degree,
            "pins": [[p.x, p.y] for p in r.net.pins],
        }
        if r.labels is not None:
            obj["labels"] = list(r.labels)
        if r.wl_opt is not None:
            obj["wl_opt"] = r.wl_opt
        lines.append(json.dumps(obj, sort_keys=True))
    _atomic_write(path, "\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> list[NetRecord]:
    """Parse and validate a dataset file.

    Labels are checked against the net's canonical grid: indices must be
    in range and must never point at a pin node.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path}:{lineno}:{exc.colno}: {exc.msg}") from exc
            try:
                records.append(_record_from_json(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
    return records


def _record_from_json(obj: dict) -> NetRecord:
    net = Net(id=obj["id"], pins=[(int(x), int(y)) for x, y in obj["pins"]])
    if int(obj["degree"]) != net.degree:
        raise ValueError(f"declared degree {obj['degree']} != {net.degree} distinct pins")
    labels = None
    if "labels" in obj:
        grid = build_hanan_grid(net)
        labels = tuple(int(i) for i in obj["labels"])
        for i in labels:
            if not 0 <= i < grid.n_nodes:
                raise ValueError(f"label index {i} out of range for {grid.n_nodes} nodes")
            if grid.nodes[i][1] is NodeKind.PIN:
                raise ValueError(f"label index {i} is a pin node")
        if tuple(sorted(set(labels))) != labels:
            raise ValueError("label indices must be strictly ascending")
    wl_opt = int(obj["wl_opt"]) if "wl_opt" in obj else None
    return NetRecord(net=net, labels=labels, wl_opt=wl_opt)


def _hex_list(arr: np.ndarray) -> list[str]:
    return [float(v).hex() for v in np.asarray(arr, dtype=np.float64).ravel()]


def _from_hex(values: list[str], shape: tuple[int, ...]) -> np.ndarray:
    flat = np.array([float.fromhex(v) for v in values], dtype=np.float64)
    expected = int(np.prod(shape))
    if flat.size != expected:
        raise ValueError(f"{flat.size} values for declared shape {shape}")
    return flat.reshape(shape)


def save_checkpoint(params: ModelParams, path: str | Path, metadata: dict | None = None) -> None:
    """Write model weights as hex floats plus free-form metadata."""
    layers = []
    for layer in (params.layer1, params.layer2):
        layers.append(
            {
                "heads": layer.heads,
                "in_dim": layer.in_dim,
                "out_dim": layer.out_dim,
                "activation": layer.activation,
                "combine": layer.combine,
                "kernel": _hex_list(layer.kernel),
                "attention_src": _hex_list(layer.attention_src),
                "attention_dst": _hex_list(layer.attention_dst),
                "bias": _hex_list(layer.bias),
            }
        )
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "attention_dropout_rate": float(params.attention_dropout_rate).hex(),
        "layer_dropout_rate": float(params.layer_dropout_rate).hex(),
        "layers": layers,
        "metadata": metadata or {},
    }
    _atomic_write(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersion(f"{path}: format_version {version!r}, expected {CHECKPOINT_VERSION}")
    try:
        layers = []
        for spec in doc["layers"]:
            heads, in_dim, out_dim = int(spec["heads"]), int(spec["in_dim"]), int(spec["out_dim"])
            layers.append(
                GatLayerParams(
                    kernel=_from_hex(spec["kernel"], (heads, in_dim, out_dim)),
                    attention_src=_from_hex(spec["attention_src"], (heads, out_dim)),
                    attention_dst=_from_hex(spec["attention_dst"], (heads, out_dim)),
                    bias=_from_hex(spec["bias"], (heads, out_dim)),
                    activation=str(spec["activation"]),
                    combine=str(spec["combine"]),
                )
            )
        if len(layers) != 2:
            raise ValueError(f"expected 2 layers, found {len(layers)}")
        params = ModelParams(
            layer1=layers[0],
            layer2=layers[1],
            attention_dropout_rate=float.fromhex(doc["attention_dropout_rate"]),
            layer_dropout_rate=float.fromhex(doc["layer_dropout_rate"]),
        )
        params.validate()
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: {exc}") from exc
    return params, doc.get("metadata", {})
