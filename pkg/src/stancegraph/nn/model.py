"""Layer stacks and the ``SGM1`` checkpoint container.

Checkpoint layout (little-endian)::

    magic b"SGM1" | u32 version=1 | u32 header_len | header (UTF-8 JSON)
    then, for every parameter listed in the header in order, its raw bytes

The JSON header records each layer's spec, the name/shape/dtype of its
parameters, the stance names and model options, so a load reproduces the
saved arrays bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..graph import InteractionGraph, Neighborhoods, StanceNames
from . import autograd as ag
from .layers import Layer, LayerSpec, build_layer

MAGIC = b"SGM1"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class GNNModel:
    layers: list[Layer]
    stances: StanceNames = field(default_factory=StanceNames)
    sentiment_weighted: bool = False

    @classmethod
    def init(cls, specs: list[LayerSpec], rng: np.random.Generator, dtype=np.float32,
             stances: StanceNames | None = None, sentiment_weighted: bool = False) -> "GNNModel":
        for a, b in zip(specs, specs[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        layers = [build_layer(s, rng=rng, dtype=dtype, sentiment_weighted=sentiment_weighted)
                  for s in specs]
        return cls(layers, stances or StanceNames(), sentiment_weighted)

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].spec.in_dim

    @property
    def dtype(self):
        return next(iter(self.layers[0].params.values())).dtype

    @property
    def uses_graph(self) -> bool:
        return any(s.kind != "dense" for s in self.specs)

    def parameters(self) -> list[ag.Tensor]:
        return [p for layer in self.layers for p in layer.params.values()]

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, arrays: list[np.ndarray]) -> None:
        for p, a in zip(self.parameters(), arrays, strict=True):
            p.data = a.copy()

    def neighborhoods(self, graph: InteractionGraph | None) -> Neighborhoods | None:
        if not self.uses_graph:
            return None
        if graph is None:
            raise ValueError("this model needs an interaction graph")
        return graph.neighborhoods(self.sentiment_weighted)

    def forward(self, x, nb: Neighborhoods | None) -> ag.Tensor:
        h = x if isinstance(x, ag.Tensor) else ag.Tensor(np.asarray(x, dtype=self.dtype))
        if h.shape[1] != self.in_dim:
            raise ValueError(f"model expects {self.in_dim} features, got {h.shape[1]}")
        for layer in self.layers:
            h = layer(h, nb)
        return h

    def astype(self, dtype) -> "GNNModel":
        """Copy with parameters cast to ``dtype`` (used for float64 gradient checks)."""
        layers = [build_layer(l.spec, {k: v.data.astype(dtype) for k, v in l.params.items()},
                              sentiment_weighted=self.sentiment_weighted) for l in self.layers]
        return GNNModel(layers, self.stances, self.sentiment_weighted)


def save_model(model: GNNModel, path) -> None:
    layers_meta = []
    blobs = []
    for layer in model.layers:
        params = []
        for name, p in layer.params.items():
            arr = np.ascontiguousarray(p.data)
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            params.append({"name": name, "shape": list(arr.shape), "dtype": le.dtype.str})
            blobs.append(le.tobytes())
        layers_meta.append({"spec": layer.spec.to_dict(), "params": params})
    header = json.dumps({"layers": layers_meta, "stances": list(model.stances),
                         "sentiment_weighted": model.sentiment_weighted}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", MAGIC, VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_model(path) -> GNNModel:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12:
            raise CheckpointError(f"{path}: truncated header")
        magic, version, hlen = struct.unpack("<4sII", head)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(fh.read(hlen).decode("utf-8"))
        layers = []
        sw = bool(meta.get("sentiment_weighted", False))
        for lm in meta["layers"]:
            params = {}
            for pm in lm["params"]:
                dt = np.dtype(pm["dtype"])
                count = int(np.prod(pm["shape"], dtype=np.int64))
                raw = fh.read(dt.itemsize * count)
                if len(raw) != dt.itemsize * count:
                    raise CheckpointError(f"{path}: truncated parameter {pm['name']}")
                params[pm["name"]] = np.frombuffer(raw, dtype=dt).reshape(pm["shape"]).astype(
                    dt.newbyteorder("="))
            layers.append(build_layer(LayerSpec(**lm["spec"]), params, sentiment_weighted=sw))
    return GNNModel(layers, StanceNames(*meta["stances"]), sw)
