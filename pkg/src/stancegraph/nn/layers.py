"""Message-passing and dense layers built on :mod:`stancegraph.nn.autograd`."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from ..graph import Neighborhoods
from . import autograd as ag
from .autograd import Tensor

LAYER_KINDS = ("sage", "gat", "dense")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    activation: str = "relu"
    bias: bool = False
    negative_slope: float = 0.2

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be >= 1")
        if self.activation not in ag.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def glorot(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def mean_matrix(nb: Neighborhoods, dtype=np.float32) -> sp.csr_matrix:
    """Row-normalized adjacency with self-loops as a CSR matrix."""
    key = ("mean", np.dtype(dtype).str)
    cache = nb.__dict__.setdefault("_matrices", {})
    if key not in cache:
        cache[key] = sp.csr_matrix((nb.coef.astype(dtype), (nb.dst, nb.src)), shape=(nb.n, nb.n))
    return cache[key]


class Layer:
    """One layer with named parameters; ``forward`` maps node states to node states."""

    param_names: tuple[str, ...] = ()

    def __init__(self, spec: LayerSpec, params: dict[str, np.ndarray]):
        self.spec = spec
        self.params = {k: Tensor(params[k], requires_grad=True, name=k) for k in self.param_names
                       if k in params}

    @classmethod
    def init(cls, spec: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> "Layer":
        params = {"weight": glorot(rng, (spec.out_dim, spec.in_dim), dtype)}
        if spec.bias:
            params["bias"] = np.zeros(spec.out_dim, dtype=dtype)
        return cls(spec, params)

    def _finish(self, out: Tensor) -> Tensor:
        if "bias" in self.params:
            out = ag.add(out, self.params["bias"])
        return ag.ACTIVATIONS[self.spec.activation](out)

    def forward(self, h: Tensor, nb: Neighborhoods | None) -> Tensor:
        raise NotImplementedError

    def __call__(self, h, nb=None) -> Tensor:
        if h.shape[-1] != self.spec.in_dim:
            raise ValueError(f"{self.spec.kind} layer expects {self.spec.in_dim} input features, "
                             f"got {h.shape[-1]}")
        return self.forward(h, nb)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec.in_dim}->{self.spec.out_dim}, {self.spec.activation})"


class DenseLayer(Layer):
    param_names = ("weight", "bias")

    def forward(self, h, nb=None):
        return self._finish(ag.linear(h, self.params["weight"]))


class SageLayer(Layer):
    """Mean over the self-looped neighborhood followed by a linear map."""

    param_names = ("weight", "bias")

    def forward(self, h, nb):
        if nb is None:
            raise ValueError("sage layer needs a graph")
        if nb.n != h.shape[0]:
            raise ValueError(f"graph has {nb.n} nodes but features have {h.shape[0]} rows")
        P = mean_matrix(nb, h.dtype)
        W = self.params["weight"]
        # (P H) W^T == P (H W^T); multiply in whichever order is cheaper
        if self.spec.out_dim < self.spec.in_dim:
            out = ag.spmm(P, ag.linear(h, W))
        else:
            out = ag.linear(ag.spmm(P, h), W)
        return self._finish(out)


class GatLayer(Layer):
    """Single-head attention over the self-looped neighborhood.

    Edge score ``e_vu = leaky_relu(attn_dst . W h_v + attn_src . W h_u)``,
    softmax-normalized over each node's neighborhood.
    """

    param_names = ("weight", "attn_dst", "attn_src", "bias")

    def __init__(self, spec, params, sentiment_weighted: bool = False):
        super().__init__(spec, params)
        self.sentiment_weighted = sentiment_weighted

    @classmethod
    def init(cls, spec, rng, dtype=np.float32):
        params = {"weight": glorot(rng, (spec.out_dim, spec.in_dim), dtype),
                  "attn_dst": glorot(rng, (spec.out_dim,), dtype),
                  "attn_src": glorot(rng, (spec.out_dim,), dtype)}
        if spec.bias:
            params["bias"] = np.zeros(spec.out_dim, dtype=dtype)
        return cls(spec, params)

    def attention(self, h: Tensor, nb: Neighborhoods) -> tuple[Tensor, Tensor]:
        z = ag.linear(h, self.params["weight"])
        s_dst = ag.matmul(z, self.params["attn_dst"])
        s_src = ag.matmul(z, self.params["attn_src"])
        e = ag.leaky_relu(ag.add(ag.gather(s_dst, nb.dst), ag.gather(s_src, nb.src)),
                          self.spec.negative_slope)
        if self.sentiment_weighted:
            logw = np.log(np.maximum(nb.edge_weight, 1e-12)).astype(e.dtype)
            e = ag.add(e, logw)
        return z, ag.segment_softmax(e, nb.indptr, nb.dst)

    def forward(self, h, nb):
        if nb is None:
            raise ValueError("gat layer needs a graph")
        if nb.n != h.shape[0]:
            raise ValueError(f"graph has {nb.n} nodes but features have {h.shape[0]} rows")
        z, alpha = self.attention(h, nb)
        return self._finish(ag.edge_aggregate(alpha, z, nb.src, nb.dst, nb.n))


LAYER_TYPES = {"sage": SageLayer, "gat": GatLayer, "dense": DenseLayer}


def build_layer(spec: LayerSpec, params: dict | None = None, rng=None, dtype=np.float32,
                sentiment_weighted: bool = False) -> Layer:
    cls = LAYER_TYPES[spec.kind]
    layer = cls.init(spec, rng, dtype) if params is None else cls(spec, params)
    if isinstance(layer, GatLayer):
        layer.sentiment_weighted = sentiment_weighted
    return layer
