"""JSON checkpoints: layer shapes, flat parameter arrays, optimizer state.

Format (version 1):
    {
      "format_version": 1,
      "layers": [{"kind": "Dense", "in_dim": 4, "out_dim": 8, "lambda": 1.0}, ...],
      "params": {"layer0.weight": [..row-major floats..], ...},
      "optimizer": {"lr": ..., "m": {...}, "v": {...}}   # optional
    }

Running statistics (BatchNorm) are stored in "params" alongside the
trainables; shapes are recovered from the layer list on load.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from alen.exceptions import ParseError
from alen.nn.layers import LayerKind, LayerSpec, Network
from alen.nn.optim import Adam

FORMAT_VERSION = 1


def _layer_to_json(spec: LayerSpec) -> dict:
    return {"kind": spec.kind.value, "in_dim": spec.in_dim,
            "out_dim": spec.out_dim, "lambda": spec.reverse_scale}


def _layer_from_json(obj: dict) -> LayerSpec:
    try:
        kind = LayerKind(obj["kind"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad layer entry: {obj!r}") from exc
    return LayerSpec(kind, int(obj["in_dim"]), int(obj["out_dim"]),
                     reverse_scale=float(obj.get("lambda", 1.0)))


def save_network(net: Network, path: str | Path,
                 optimizer: Adam | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "layers": [_layer_to_json(s) for s in net.layers],
        "params": {},
    }
    for name, arr in net.params.items():
        doc["params"][name] = arr.ravel().tolist()
    for name, arr in net.buffers.items():
        doc["params"][name] = arr.ravel().tolist()
    if optimizer is not None:
        doc["optimizer"] = optimizer.state_dict()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))


def load_network(path: str | Path) -> tuple[Network, Adam | None]:
    """Rebuild a network (and optimizer, if stored) from a checkpoint file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {path}", line=exc.lineno) from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint format_version: {version!r}")
    layers = [_layer_from_json(obj) for obj in doc.get("layers", [])]
    net = Network(layers, np.random.default_rng(0))
    stored = doc.get("params", {})
    for target in (net.params, net.buffers):
        for name, arr in target.items():
            if name not in stored:
                raise ParseError(f"checkpoint missing parameter '{name}'")
            flat = np.asarray(stored[name], dtype=np.float64)
            if flat.size != arr.size:
                raise ParseError(f"parameter '{name}' has {flat.size} values, "
                                 f"expected {arr.size}")
            target[name] = flat.reshape(arr.shape)
    extras = set(stored) - set(net.params) - set(net.buffers)
    if extras:
        raise ParseError(f"checkpoint has unknown parameters: {sorted(extras)}")
    opt = None
    if "optimizer" in doc:
        shapes = {n: a.shape for n, a in net.params.items()}
        opt = Adam.from_state_dict(doc["optimizer"], shapes)
    return net, opt
