"""FM scoring head and the composed embedding -> refinement -> FM predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from . import refinement
from .numerics import Tensor


def embed(table: Tensor, features: np.ndarray) -> Tensor:
    """``B x f`` global indices -> ``B x f x d`` embedding matrices."""
    return nx.take_rows(table, features)


def fm_pairwise(E_r: Tensor) -> Tensor:
    """Sum of pairwise inner products of the rows, per instance (``B``).

    Uses ``0.5 * sum_k[(sum_i e_ik)^2 - sum_i e_ik^2]``.
    """
    s = nx.sum(E_r, axis=1)
    sq = nx.sum(nx.square(E_r), axis=1)
    return nx.scale(nx.sum(nx.sub(nx.square(s), sq), axis=1), 0.5)


def fm_pairwise_bruteforce(E: np.ndarray) -> np.ndarray:
    B, f, _ = E.shape
    out = np.zeros(B, dtype=np.float64)
    for i in range(f):
        for j in range(i + 1, f):
            out += np.einsum("bk,bk->b", E[:, i].astype(np.float64), E[:, j].astype(np.float64))
    return out


def fm_score(E_r: Tensor, features: np.ndarray, linear_w: Tensor, bias: Tensor) -> Tensor:
    """Bias + first-order weights of the raw indices + pairwise term of ``E_r``."""
    first = nx.sum(nx.take_rows(linear_w, features), axis=(1, 2))
    return nx.add(nx.add(first, fm_pairwise(E_r)), bias)


@dataclass
class ModelSpec:
    num_features: int
    num_fields: int
    embed_dim: int = 20
    attn_dim: int | None = None
    cie_hidden: tuple[int, ...] = (128,)
    variant: int = 13
    init: str = "xavier"

    def __post_init__(self):
        self.variant = refinement.resolve_variant(self.variant)
        if self.attn_dim is None:
            self.attn_dim = self.embed_dim
        self.cie_hidden = tuple(int(h) for h in self.cie_hidden)


class FMFRNet:
    """FM over refined embeddings; variant 1 is plain FM.

    Parameter names: ``embed``, ``linear_w``, ``bias``, ``ieu_w.*``, ``ieu_g.*``.
    """

    def __init__(self, spec: ModelSpec, params: dict[str, Tensor]):
        self.spec = spec
        self.params = params
        self.refine = refinement.build_variant(spec.variant, params)

    @classmethod
    def initialize(cls, spec: ModelSpec, seed: int = 0, dtype=nx.DEFAULT_DTYPE) -> "FMFRNet":
        rng = np.random.default_rng(seed)
        params = {
            "embed": nx.parameter(rng.normal(0.0, 0.01, size=(spec.num_features, spec.embed_dim)), dtype),
            "linear_w": nx.parameter(np.zeros((spec.num_features, 1)), dtype),
            "bias": nx.parameter(np.zeros(()), dtype),
        }
        params.update(refinement.init_refiner(rng, spec.variant, spec.num_fields, spec.embed_dim,
                                              spec.attn_dim, spec.cie_hidden, spec.init, dtype))
        return cls(spec, params)

    @property
    def variant(self) -> int:
        return self.spec.variant

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def _check(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features)
        if features.ndim != 2 or features.shape[1] != self.spec.num_fields:
            raise nx.ShapeError(f"expected B x {self.spec.num_fields} feature indices, got {features.shape}")
        return features

    def embed(self, features: np.ndarray) -> Tensor:
        return embed(self.params["embed"], self._check(features))

    def refined(self, features: np.ndarray, dropout: refinement.Dropout | None = None) -> Tensor:
        return self.refine(self.embed(features), dropout)

    def logits(self, features: np.ndarray, dropout: refinement.Dropout | None = None) -> Tensor:
        features = self._check(features)
        E_r = self.refine(embed(self.params["embed"], features), dropout)
        return fm_score(E_r, features, self.params["linear_w"], self.params["bias"])

    def forward(self, features: np.ndarray, dropout: refinement.Dropout | None = None) -> Tensor:
        """Click probabilities as a graph-recording tensor."""
        return nx.sigmoid(self.logits(features, dropout))

    def predict(self, features: np.ndarray, chunk: int = 16384) -> np.ndarray:
        """Evaluation-mode probabilities (no dropout, no graph)."""
        features = self._check(features)
        out = []
        with nx.no_grad():
            for start in range(0, len(features), chunk):
                out.append(self.forward(features[start:start + chunk]).data)
        if not out:
            return np.empty(0, dtype=self.params["embed"].dtype)
        return np.concatenate(out)

    def gate_weights(self, features: np.ndarray) -> np.ndarray:
        """``sig(W_b)`` for a batch (``B x f x d``; ``B x f x 1`` for vector gates)."""
        with nx.no_grad():
            W = refinement.gate_logits(self.embed(features), self.params, self.variant)
            return nx.sigmoid(W).data
