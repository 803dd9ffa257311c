"""Central finite-difference checks of every differentiable operation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics as nx
from .models import FMFRNet, ModelSpec
from .numerics import Tensor

STEP = 1e-5
TOLERANCE = 1e-6


def numeric_grad(loss: Callable[[], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of ``loss`` w.r.t. every entry of ``x`` (mutated in place, restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = loss()
        flat[i] = old - h
        down = loss()
        flat[i] = old
        gf[i] = (up - down) / (2 * h)
    return g


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def check(build: Callable[[list[Tensor]], Tensor], inputs: list[np.ndarray],
          h: float = STEP) -> float:
    """Relative error of the full gradient (all inputs stacked into one vector)."""
    leaves = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
    out = build(leaves)
    out.backward()

    def value() -> float:
        with nx.no_grad():
            return float(build(leaves).data)

    ana, num = [], []
    for t in leaves:
        num.append(numeric_grad(value, t.data, h).reshape(-1))
        ana.append((t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1))
    return rel_err(np.concatenate(ana), np.concatenate(num))


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Tensor:
    return nx.sum(nx.mul(out, Tensor(rng.normal(size=out.shape))))


def op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable, list[np.ndarray]]]:
    """Graph builders with random N(0,1) inputs, keyed by name."""
    n = rng.normal
    R = {}

    def w(name, fn, *shapes_or_arrays):
        arrays = [a if isinstance(a, np.ndarray) else n(size=a) for a in shapes_or_arrays]
        weights = np.random.default_rng(rng.integers(1 << 31))
        fixed = {}

        def build(ts):
            out = fn(*ts)
            if "r" not in fixed:
                fixed["r"] = weights.normal(size=out.shape)
            return nx.sum(nx.mul(out, Tensor(fixed["r"]))) if out.data.size > 1 else out
        R[name] = (build, arrays)

    w("matmul", nx.matmul, (3, 4), (4, 2))
    w("matmul_shared", nx.matmul, (2, 3, 4), (4, 5))
    w("matmul_batched", nx.matmul, (2, 3, 4), (2, 4, 3))
    w("row_softmax", nx.row_softmax, (2, 3, 5))
    w("sigmoid", nx.sigmoid, (3, 4))
    w("prelu", nx.prelu, (4, 6), np.array([rng.uniform(0.05, 0.5)]))
    w("mul", nx.mul, (2, 3, 4), (2, 3, 4))
    w("mul_row", nx.mul, (2, 3, 4), (2, 1, 4))
    w("mul_col", nx.mul, (2, 3, 4), (2, 3, 1))
    w("add_shared", nx.add, (5, 3), (3,))
    w("sub", nx.sub, (3, 4), (3, 4))
    w("scale", lambda a: nx.scale(a, 2.5), (3, 4))
    w("rsub_scalar", lambda a: nx.rsub_scalar(1.0, a), (3, 4))
    w("square", nx.square, (3, 4))
    w("log", nx.log, np.exp(n(size=(3, 4))))
    w("clip", lambda a: nx.clip(a, -3.0, 3.0), n(size=(3, 4)).clip(-2.9, 2.9))
    w("sum_axis", lambda a: nx.sum(a, axis=1), (2, 3, 4))
    w("reshape", lambda a: nx.reshape(a, (4, 6)), (2, 3, 4))
    w("transpose", nx.transpose, (2, 3, 4))
    w("concat_rows", lambda a, b: nx.concat_rows([a, b]), (2, 3, 4), (2, 2, 4))
    idx = rng.integers(0, 5, (3, 4))
    w("take_rows", lambda t: nx.take_rows(t, idx), (5, 3))

    from .training import bce_loss
    y = rng.integers(0, 2, 6)
    R["bce_loss"] = (lambda ts: bce_loss(ts[0], y), [rng.uniform(0.05, 0.95, 6)])
    R["double_use"] = (lambda ts: nx.sum(nx.mul(ts[0], ts[0])), [n(size=(3, 3))])
    return R


KINK_MARGIN = 1e-3


def _kink_distance(params: dict[str, np.ndarray], feats: np.ndarray) -> float:
    """Smallest |pre-activation| of any PReLU in the CIE stacks for this batch."""
    E = params["embed"][feats].reshape(len(feats), -1)
    closest = np.inf
    for prefix in ("ieu_w.", "ieu_g."):
        h = E
        layer = 0
        while f"{prefix}cie.{layer}.weight" in params:
            z = h @ params[f"{prefix}cie.{layer}.weight"].T + params[f"{prefix}cie.{layer}.bias"]
            closest = min(closest, float(np.abs(z).min()))
            h = np.where(z > 0, z, params[f"{prefix}cie.{layer}.slope"] * z)
            layer += 1
    return closest


def end_to_end_case(rng: np.random.Generator, variant=13):
    """Loss of a tiny FM_FRNet on a 4-instance batch, all parameters as inputs.

    Draws are repeated until no PReLU input lies within ``KINK_MARGIN`` of zero,
    where a finite difference would straddle the kink.
    """
    from .training import bce_loss
    f, per_field = 3, 3
    spec = ModelSpec(num_features=f * per_field, num_fields=f, embed_dim=3, attn_dim=2,
                     cie_hidden=(4,), variant=variant)
    model = FMFRNet.initialize(spec, seed=int(rng.integers(1 << 31)), dtype=np.float64)
    names = list(model.params)
    while True:
        arrays = {}
        for k in names:
            shape = model.params[k].data.shape
            arrays[k] = rng.uniform(0.05, 0.5, shape) if k.endswith(".slope") else rng.normal(0, 0.5, shape)
        feats = np.stack([rng.integers(0, per_field, 4) + j * per_field for j in range(f)], axis=1)
        labels = rng.integers(0, 2, 4)
        if _kink_distance(arrays, feats) > KINK_MARGIN:
            break

    def build(ts):
        m = FMFRNet(spec, dict(zip(names, ts)))
        return bce_loss(m.forward(feats), labels)

    return build, [arrays[k] for k in names]


@dataclass
class CheckResult:
    name: str
    worst: float

    @property
    def ok(self) -> bool:
        return self.worst < TOLERANCE


def run_suite(seeds: int = 50, variants=(1, 12, 13)) -> list[CheckResult]:
    worst: dict[str, float] = {}
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        cases = op_cases(rng)
        for v in variants:
            cases[f"fm_frnet_v{v}"] = end_to_end_case(rng, v)
        for name, (build, arrays) in cases.items():
            worst[name] = max(worst.get(name, 0.0), check(build, arrays))
    return [CheckResult(k, v) for k, v in worst.items()]
