"""Cross-entropy training with Adam, plateau LR decay and early stopping."""

from __future__ import annotations

import contextlib
import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from . import numerics as nx
from .config import TrainConfig
from .data import Dataset
from .models import FMFRNet, ModelSpec
from .numerics import Tensor
from .refinement import Dropout

log = logging.getLogger(__name__)

CLAMP = 1e-7
METRIC_COLUMNS = ["epoch", "lr", "train_loss", "val_auc", "val_logloss", "seconds"]


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


def bce_loss(probs: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy; probabilities are clamped before the log."""
    y = np.asarray(labels, dtype=probs.dtype).reshape(probs.shape)
    p = nx.clip(probs, CLAMP, 1 - CLAMP)
    pos = nx.mul(nx.log(p), Tensor(y))
    neg = nx.mul(nx.log(nx.rsub_scalar(1.0, p)), Tensor(1 - y))
    return nx.scale(nx.sum(nx.add(pos, neg)), -1.0 / max(p.data.size, 1))


class Adam:
    """Bias-corrected Adam; gradients are cleared after every step."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1 - self.beta1 ** t
        c2 = 1 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            dt = p.data.dtype.type
            m *= dt(self.beta1)
            m += dt(1 - self.beta1) * g
            v *= dt(self.beta2)
            v += dt(1 - self.beta2) * (g * g)
            m_hat = m / dt(c1)
            v_hat = v / dt(c2)
            p.data -= dt(self.lr) * m_hat / (np.sqrt(v_hat) + dt(self.eps))
            p.grad = None

    def zero_grad(self) -> None:
        nx.zero_grads(self.params)


class ReduceLROnPlateau:
    """Multiply the LR by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, lr: float, factor: float = 0.1, patience: int = 4,
                 min_delta: float = 1e-5, mode: str = "max"):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_delta = min_delta
        self.sign = 1.0 if mode == "max" else -1.0
        self.best: float | None = None
        self.bad_epochs = 0

    def step(self, value: float) -> float:
        if _improved(value, self.best, self.min_delta, self.sign):
            self.best = value
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


class EarlyStopping:
    def __init__(self, patience: int = 5, min_delta: float = 1e-5):
        self.patience = patience
        self.min_delta = min_delta
        self.best: float | None = None
        self.bad_epochs = 0

    def step(self, value: float) -> bool:
        """Record one epoch's validation AUC; True means stop."""
        if _improved(value, self.best, self.min_delta, 1.0):
            self.best = value
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def _improved(value: float, best: float | None, min_delta: float, sign: float) -> bool:
    return best is None or sign * (value - best) > min_delta


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_auc: float
    val_logloss: float
    seconds: float

    def row(self) -> list[str]:
        return [str(self.epoch), repr(self.lr), repr(self.train_loss), repr(self.val_auc),
                repr(self.val_logloss), f"{self.seconds:.3f}"]


@dataclass
class TrainResult:
    model: FMFRNet
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    test_auc: float | None = None
    test_logloss: float | None = None

    @property
    def best_val_auc(self) -> float | None:
        return max((r.val_auc for r in self.history), default=None)


def write_metrics_csv(history: list[EpochRecord], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for rec in history:
            w.writerow(rec.row())


def evaluate(model: FMFRNet, ds: Dataset) -> tuple[float, float]:
    p = model.predict(ds.features)
    return metrics.auc(p, ds.labels), metrics.logloss(p, ds.labels)


def model_spec(config: TrainConfig, num_features: int, num_fields: int) -> ModelSpec:
    return ModelSpec(num_features=num_features, num_fields=num_fields, embed_dim=config.embed_dim,
                     attn_dim=config.attn_dim, cie_hidden=config.cie_hidden,
                     variant=config.variant_id, init=config.init)


def single_thread():
    """Pin BLAS to one thread (reproducibility mode)."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


def train(train_ds: Dataset, val_ds: Dataset, config: TrainConfig,
          test_ds: Dataset | None = None, metrics_path: Path | str | None = None) -> TrainResult:
    """Fit a model and return it restored to its best-validation-AUC epoch."""
    guard = single_thread() if config.deterministic else contextlib.nullcontext()
    with guard:
        return _train(train_ds, val_ds, config, test_ds, metrics_path)


def _train(train_ds, val_ds, config, test_ds, metrics_path) -> TrainResult:
    dtype = np.float32 if config.precision == "float32" else np.float64
    spec = model_spec(config, train_ds.num_features, train_ds.num_fields)
    model = FMFRNet.initialize(spec, seed=config.seed, dtype=dtype)
    opt = Adam(model.parameters(), lr=config.lr)
    scheduler = ReduceLROnPlateau(config.lr, config.scheduler_factor, config.scheduler_patience,
                                  config.min_delta, "max" if config.scheduler_metric == "auc" else "min")
    stopper = EarlyStopping(config.early_stop_patience, config.min_delta)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout = Dropout(config.dropout, np.random.default_rng([config.seed, 2]))

    result = TrainResult(model)
    best_auc = -np.inf
    best_state: dict[str, np.ndarray] | None = None
    n = len(train_ds)
    log.info("variant %d: %d parameters, %d train rows", spec.variant, model.num_parameters(), n)

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        lr_used = opt.lr
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            rows = perm[start:start + config.batch_size]
            loss = bce_loss(model.forward(train_ds.features[rows], dropout), train_ds.labels[rows])
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            opt.step()
            loss_sum += value * len(rows)
        val_auc, val_ll = evaluate(model, val_ds)
        seconds = 0.0 if config.deterministic else time.perf_counter() - t0
        rec = EpochRecord(epoch, lr_used, loss_sum / max(n, 1), val_auc, val_ll, seconds)
        result.history.append(rec)
        log.info("epoch %d lr %.1e loss %.5f val_auc %.5f val_logloss %.5f (%.1fs)",
                 epoch, lr_used, rec.train_loss, val_auc, val_ll, time.perf_counter() - t0)
        if val_auc > best_auc:
            best_auc = val_auc
            best_state = {k: p.data.copy() for k, p in model.params.items()}
            result.best_epoch = epoch
        opt.lr = scheduler.step(val_auc if config.scheduler_metric == "auc" else val_ll)
        if metrics_path is not None:
            write_metrics_csv(result.history, metrics_path)
        if stopper.step(val_auc):
            log.info("early stop after epoch %d (best epoch %d)", epoch, result.best_epoch)
            break

    if best_state is not None:
        for k, arr in best_state.items():
            model.params[k].data = arr
    if metrics_path is not None:
        write_metrics_csv(result.history, metrics_path)
    if test_ds is not None and len(test_ds):
        result.test_auc, result.test_logloss = evaluate(model, test_ds)
    return result
