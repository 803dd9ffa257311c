"""Context-aware feature refinement.

Two independent Information Extraction Units (IEUs) read the embedding
matrix ``E`` of each instance. Each IEU multiplies a simplified
self-attention output (cross-feature relations) by a context vector that
an MLP extracts from the whole flattened instance. One IEU produces the
complementary representation ``E_g``, the other produces gate logits; the
Complementary Selection Gate blends ``E`` and ``E_g`` element-wise.

Thirteen composition variants are supported so that every component can
be removed or swapped for comparison; variant 13 is the full model and
variant 12 replaces the bit-level gate with one weight per field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics as nx
from .numerics import Tensor

Params = dict[str, Tensor]

VARIANT_ALIASES = {"fm": 1, "frnet-vec": 12, "frnet": 13}

VARIANT_FORMULAS = {
    1: "E_r = E",
    2: "E_r = O_vec",
    3: "E_r = E_g",
    4: "FRNet without CIE",
    5: "E_r = E + E_g",
    6: "E_r = E*sig(W_v)",
    7: "E_r = E*sig(W_b)",
    8: "E_r = E*sig(W_v) + E",
    9: "E_r = E*sig(W_b) + E",
    10: "E_r = E*sig(W_v) + E_g",
    11: "E_r = E*sig(W_b) + E_g",
    12: "FRNet-Vec",
    13: "FRNet",
}


def resolve_variant(variant) -> int:
    """Accept ``1..13`` or one of the names ``fm``, ``frnet``, ``frnet-vec``."""
    if isinstance(variant, str):
        key = variant.strip().lower()
        if key in VARIANT_ALIASES:
            return VARIANT_ALIASES[key]
        try:
            variant = int(key)
        except ValueError:
            raise ValueError(f"unknown variant {variant!r}") from None
    if isinstance(variant, bool) or not isinstance(variant, (int, np.integer)) or not 1 <= variant <= 13:
        raise ValueError(f"unknown variant {variant!r}; expected 1..13 or fm/frnet/frnet-vec")
    return int(variant)


@dataclass(frozen=True)
class VariantSpec:
    """Which IEUs a variant owns and whether their CIE is present."""

    uses_g: bool
    uses_w: bool
    cie: bool = True
    g_attention_only: bool = False


VARIANT_SPECS = {
    1: VariantSpec(False, False),
    2: VariantSpec(True, False, cie=False, g_attention_only=True),
    3: VariantSpec(True, False),
    4: VariantSpec(True, True, cie=False),
    5: VariantSpec(True, False),
    6: VariantSpec(False, True),
    7: VariantSpec(False, True),
    8: VariantSpec(False, True),
    9: VariantSpec(False, True),
    10: VariantSpec(True, True),
    11: VariantSpec(True, True),
    12: VariantSpec(True, True),
    13: VariantSpec(True, True),
}


# initialization ------------------------------------------------------------

def _weight(rng: np.random.Generator, shape, fan_in: int, fan_out: int, init: str, dtype) -> Tensor:
    if init == "normal":
        std = 0.01
    elif init == "xavier":
        std = float(np.sqrt(2.0 / (fan_in + fan_out)))
    else:
        raise ValueError(f"unknown init {init!r}")
    return nx.parameter(rng.normal(0.0, std, size=shape), dtype=dtype)


def init_ieu(rng: np.random.Generator, num_fields: int, embed_dim: int, attn_dim: int,
             hidden: tuple[int, ...] = (128,), with_cie: bool = True,
             init: str = "xavier", dtype=nx.DEFAULT_DTYPE) -> Params:
    """Parameters of one IEU; CIE layer weights are stored ``n_out x n_in``."""
    if attn_dim <= 0:
        raise ValueError(f"attention size must be positive, got {attn_dim}")
    d, dk = embed_dim, attn_dim
    p: Params = {
        "W_Q": _weight(rng, (d, dk), d, dk, init, dtype),
        "W_K": _weight(rng, (d, dk), d, dk, init, dtype),
        "W_V": _weight(rng, (d, dk), d, dk, init, dtype),
        "W_P": _weight(rng, (dk, d), dk, d, init, dtype),
    }
    if with_cie:
        widths = [num_fields * d, *hidden, d]
        for layer, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
            p[f"cie.{layer}.weight"] = _weight(rng, (n_out, n_in), n_in, n_out, init, dtype)
            p[f"cie.{layer}.bias"] = nx.parameter(np.zeros(n_out), dtype=dtype)
            p[f"cie.{layer}.slope"] = nx.parameter([0.25], dtype=dtype)
    return p


def cie_layers(p: Params) -> int:
    n = 0
    while f"cie.{n}.weight" in p:
        n += 1
    return n


# building blocks -----------------------------------------------------------

def self_attention(E: Tensor, p: Params) -> Tensor:
    """``softmax(Q K^T) V W_P`` with no scaling, no biases and a single head."""
    Q = nx.matmul(E, p["W_Q"])
    K = nx.matmul(E, p["W_K"])
    V = nx.matmul(E, p["W_V"])
    A = nx.row_softmax(nx.matmul(Q, nx.transpose(K)))
    return nx.matmul(nx.matmul(A, V), p["W_P"])


class Dropout:
    """Inverted dropout drawing masks from a dedicated generator."""

    def __init__(self, rate: float, rng: np.random.Generator | None):
        self.rate = rate
        self.rng = rng

    def __call__(self, h: Tensor) -> Tensor:
        if self.rng is None or self.rate <= 0:
            return h
        keep = 1.0 - self.rate
        mask = (self.rng.random(h.shape) < keep).astype(h.dtype) / h.dtype.type(keep)
        return nx.mul(h, Tensor(mask))


def cie(E: Tensor, p: Params, dropout: Dropout | None = None) -> Tensor:
    """Contextual vector ``O_bit`` of shape ``B x 1 x d`` from the flattened instance."""
    n_layers = cie_layers(p)
    if n_layers == 0:
        raise ValueError("CIE needs at least the final projection layer")
    B, f, d = E.shape
    h = nx.reshape(E, (B, f * d))
    for layer in range(n_layers):
        W = p[f"cie.{layer}.weight"]
        if layer == 0 and W.shape[1] != f * d:
            raise nx.ShapeError(f"CIE input width {W.shape[1]} != f*d = {f * d}")
        h = nx.add(nx.matmul(h, nx.transpose(W)), p[f"cie.{layer}.bias"])
        h = nx.prelu(h, p[f"cie.{layer}.slope"])
        if dropout is not None and layer < n_layers - 1:
            h = dropout(h)
    if h.shape[1] != d:
        raise nx.ShapeError(f"CIE output width {h.shape[1]} != embedding size {d}")
    return nx.reshape(h, (B, 1, d))


def integrate_bit(O_vec: Tensor, O_bit: Tensor) -> Tensor:
    """Broadcast the ``1 x d`` context row over the ``f`` rows of ``O_vec``."""
    return nx.mul(O_vec, O_bit)


def integrate_vec(O_vec: Tensor, O_bit: Tensor) -> Tensor:
    """``O_vec @ O_bit^T``: one weight per field, shape ``B x f x 1``."""
    return nx.matmul(O_vec, nx.transpose(O_bit))


def ieu_bit(E: Tensor, p: Params, dropout: Dropout | None = None) -> Tensor:
    O_vec = self_attention(E, p)
    if cie_layers(p) == 0:
        return O_vec
    return integrate_bit(O_vec, cie(E, p, dropout))


def ieu_vec(E: Tensor, p: Params, dropout: Dropout | None = None) -> Tensor:
    O_vec = self_attention(E, p)
    if cie_layers(p) == 0:
        return nx.sum(O_vec, axis=-1, keepdims=True)  # O_bit of ones
    return integrate_vec(O_vec, cie(E, p, dropout))


def csgate(E: Tensor, E_g: Tensor, W: Tensor) -> Tensor:
    """``E * sig(W) + E_g * (1 - sig(W))``; ``W`` is ``f x d`` or ``f x 1`` per instance."""
    if E.shape != E_g.shape:
        raise nx.ShapeError(f"csgate: E {E.shape} and E_g {E_g.shape} differ")
    if W.shape != E.shape and W.shape != (*E.shape[:-1], 1):
        raise nx.ShapeError(f"csgate: gate {W.shape} does not fit E {E.shape}")
    gate = nx.sigmoid(W)
    return nx.add(nx.mul(E, gate), nx.mul(E_g, nx.rsub_scalar(1.0, gate)))


# composition ---------------------------------------------------------------

def split_params(params: Params) -> tuple[Params, Params]:
    """Pull ``ieu_w.*`` and ``ieu_g.*`` out of a flat parameter dict."""
    w = {k[len("ieu_w."):]: v for k, v in params.items() if k.startswith("ieu_w.")}
    g = {k[len("ieu_g."):]: v for k, v in params.items() if k.startswith("ieu_g.")}
    return w, g


def init_refiner(rng: np.random.Generator, variant: int, num_fields: int, embed_dim: int,
                 attn_dim: int, hidden: tuple[int, ...] = (128,), init: str = "xavier",
                 dtype=nx.DEFAULT_DTYPE) -> Params:
    spec = VARIANT_SPECS[resolve_variant(variant)]
    params: Params = {}
    if spec.uses_w:
        for k, v in init_ieu(rng, num_fields, embed_dim, attn_dim, hidden, spec.cie, init, dtype).items():
            params[f"ieu_w.{k}"] = v
    if spec.uses_g:
        for k, v in init_ieu(rng, num_fields, embed_dim, attn_dim, hidden, spec.cie, init, dtype).items():
            params[f"ieu_g.{k}"] = v
    return params


def build_variant(variant, params: Params) -> Callable[..., Tensor]:
    """Refinement function ``E -> E_r`` for one ablation variant.

    The returned callable takes ``(E, dropout=None)``.
    """
    v = resolve_variant(variant)
    w, g = split_params(params)
    spec = VARIANT_SPECS[v]
    if spec.uses_w and not w:
        raise ValueError(f"variant {v} needs ieu_w parameters")
    if spec.uses_g and not g:
        raise ValueError(f"variant {v} needs ieu_g parameters")

    def refine(E: Tensor, dropout: Dropout | None = None) -> Tensor:
        if v == 1:
            return E
        if v == 2:
            return self_attention(E, g)
        if v == 3:
            return ieu_bit(E, g, dropout)
        if v == 5:
            return nx.add(E, ieu_bit(E, g, dropout))
        vec = v in (6, 8, 10, 12)
        W = ieu_vec(E, w, dropout) if vec else ieu_bit(E, w, dropout)
        if v in (4, 12, 13):
            return csgate(E, ieu_bit(E, g, dropout), W)
        selected = nx.mul(E, nx.sigmoid(W))
        if v in (6, 7):
            return selected
        if v in (8, 9):
            return nx.add(selected, E)
        return nx.add(selected, ieu_bit(E, g, dropout))  # 10, 11

    refine.variant = v
    return refine


def frnet_forward(E: Tensor, params: Params, mode: str = "bit",
                  dropout: Dropout | None = None) -> Tensor:
    """Full refinement: complement from ``ieu_g``, gate from ``ieu_w``, then CSGate."""
    if mode not in ("bit", "vec"):
        raise ValueError(f"mode must be 'bit' or 'vec', got {mode!r}")
    return build_variant(13 if mode == "bit" else 12, params)(E, dropout)


def gate_logits(E: Tensor, params: Params, variant) -> Tensor:
    """The gate input ``W_b`` (or ``W_v``) a variant would apply to ``E``."""
    v = resolve_variant(variant)
    if not VARIANT_SPECS[v].uses_w:
        raise ValueError(f"variant {v} has no weight branch")
    w, _ = split_params(params)
    return ieu_vec(E, w) if v in (6, 8, 10, 12) else ieu_bit(E, w)
