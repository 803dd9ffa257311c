"""Delimited-record ingestion: vocabularies, encoding and splits.

Files are header-bearing delimited text whose first column is ``label``
and whose remaining columns hold one token per field. Each field owns a
contiguous slice of the global feature index space; index 0 of every slice
is reserved for unknown / folded tokens.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING = "⟨missing⟩"
UNKNOWN = "⟨unknown⟩"


class DataError(ValueError):
    """Malformed input data."""


def discretize_numeric(value, index: int | None = None) -> str:
    """Map a non-negative count-like number to a categorical token.

    Values above 2 become ``floor(ln(v)**2)``; smaller ones are rounded.
    """
    if value is None or (isinstance(value, str) and value.strip() == ""):
        return MISSING
    v = float(value)
    if math.isnan(v):
        return MISSING
    if v < 0:
        where = f" at record {index}" if index is not None else ""
        raise DataError(f"negative numeric value {v}{where}")
    if v > 2:
        return str(int(math.floor(math.log(v) ** 2)))
    return str(int(math.floor(v + 0.5)))


@dataclass
class FieldVocab:
    field_name: str
    index: dict[str, int] = field(default_factory=lambda: {UNKNOWN: 0})
    counts: dict[str, int] = field(default_factory=lambda: {UNKNOWN: 0})
    unknown_index: int = 0

    def __len__(self) -> int:
        return len(self.index)

    def lookup(self, token: str) -> int:
        return self.index.get(token, self.unknown_index)


@dataclass
class Vocab:
    fields: list[FieldVocab]

    @property
    def field_names(self) -> list[str]:
        return [f.field_name for f in self.fields]

    @property
    def offsets(self) -> np.ndarray:
        sizes = [len(f) for f in self.fields]
        return np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)

    @property
    def num_features(self) -> int:
        return int(sum(len(f) for f in self.fields))

    @property
    def num_fields(self) -> int:
        return len(self.fields)

    def dump(self, path: Path | str) -> None:
        """Write ``field, token, index, count`` rows (tab separated, global index)."""
        offsets = self.offsets
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["field", "token", "index", "count"])
            for off, fv in zip(offsets, self.fields):
                for tok, idx in fv.index.items():
                    w.writerow([fv.field_name, tok, int(off) + idx, fv.counts.get(tok, 0)])

    @classmethod
    def load(cls, path: Path | str) -> "Vocab":
        fields: dict[str, FieldVocab] = {}
        offsets: dict[str, int] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            rows = csv.reader(fh, delimiter="\t")
            header = next(rows, None)
            if header != ["field", "token", "index", "count"]:
                raise DataError(f"{path}: not a vocabulary dump")
            for name, tok, idx, cnt in rows:
                if name not in fields:
                    fields[name] = FieldVocab(name, index={}, counts={})
                    offsets[name] = int(idx)
                fields[name].index[tok] = int(idx) - offsets[name]
                fields[name].counts[tok] = int(cnt)
        return cls(list(fields.values()))


@dataclass
class RawTable:
    """Unencoded records as read from disk."""

    field_names: list[str]
    labels: np.ndarray
    tokens: list[list[str]]
    source: str = "<memory>"

    def __len__(self) -> int:
        return len(self.tokens)

    def subset(self, rows: Sequence[int]) -> "RawTable":
        return RawTable(self.field_names, self.labels[np.asarray(rows, dtype=np.int64)],
                        [self.tokens[i] for i in rows], self.source)


@dataclass
class Dataset:
    """Encoded instances: ``features[i, j]`` is the global index of field ``j``."""

    features: np.ndarray
    labels: np.ndarray
    vocab: Vocab

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_fields(self) -> int:
        return self.vocab.num_fields

    @property
    def num_features(self) -> int:
        return self.vocab.num_features


def read_table(path: Path | str, delimiter: str = ",",
               numeric_fields: Iterable[str] = ()) -> RawTable:
    path = Path(path)
    numeric = set(numeric_fields)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if not header or header[0].strip() != "label":
            raise DataError(f"{path}: first header column must be 'label'")
        names = [h.strip() for h in header[1:]]
        if not names:
            raise DataError(f"{path}: no feature columns")
        unknown_numeric = numeric - set(names)
        if unknown_numeric:
            raise DataError(f"{path}: numeric fields not in header: {sorted(unknown_numeric)}")
        is_num = [n in numeric for n in names]
        labels: list[int] = []
        tokens: list[list[str]] = []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: record {i} has {len(row)} columns, expected {len(header)}")
            lab = row[0].strip()
            if lab not in ("0", "1"):
                raise DataError(f"{path}: record {i} has label {lab!r}, expected 0 or 1")
            labels.append(int(lab))
            toks = []
            for num, tok in zip(is_num, row[1:]):
                if num:
                    toks.append(discretize_numeric(tok, i))
                else:
                    toks.append(tok if tok != "" else MISSING)
            tokens.append(toks)
    return RawTable(names, np.asarray(labels, dtype=np.int64), tokens, str(path))


def build_vocab(table: RawTable, min_feature_count: int = 1) -> Vocab:
    """Per-field vocabularies; tokens rarer than ``min_feature_count`` fold to unknown.

    Index assignment follows first appearance among surviving tokens.
    """
    if min_feature_count < 1:
        raise ValueError("min_feature_count must be >= 1")
    f = len(table.field_names)
    counters = [Counter() for _ in range(f)]
    for i, toks in enumerate(table.tokens):
        if len(toks) != f:
            raise DataError(f"{table.source}: record {i} is ragged ({len(toks)} tokens, {f} fields)")
        for c, tok in zip(counters, toks):
            c[tok] += 1
    fields = []
    for name, counter in zip(table.field_names, counters):
        fv = FieldVocab(name)
        folded = 0
        for tok, cnt in counter.items():  # insertion order == first-seen order
            if cnt >= min_feature_count and tok != UNKNOWN:
                fv.index[tok] = len(fv.index)
                fv.counts[tok] = cnt
            else:
                folded += cnt
        fv.counts[UNKNOWN] = folded
        fields.append(fv)
    return Vocab(fields)


def encode(table: RawTable, vocab: Vocab) -> Dataset:
    if table.field_names != vocab.field_names:
        raise DataError(f"{table.source}: header fields {table.field_names} do not match vocabulary "
                        f"{vocab.field_names}")
    offsets = vocab.offsets
    feats = np.empty((len(table), vocab.num_fields), dtype=np.int64)
    for j, fv in enumerate(vocab.fields):
        lookup = fv.index
        feats[:, j] = [lookup.get(toks[j], 0) for toks in table.tokens]
    feats += offsets
    return Dataset(feats, table.labels.astype(np.int64), vocab)


def encode_record(label: int, tokens: Sequence[str], vocab: Vocab) -> tuple[int, np.ndarray]:
    if label not in (0, 1):
        raise DataError(f"label {label!r} outside {{0, 1}}")
    if len(tokens) != vocab.num_fields:
        raise DataError(f"record has {len(tokens)} tokens, expected {vocab.num_fields}")
    idx = np.array([fv.lookup(t) for fv, t in zip(vocab.fields, tokens)], dtype=np.int64)
    return label, idx + vocab.offsets


def split_sizes(n: int, ratios: Sequence[int]) -> list[int]:
    """Cut ``n`` rows by integer ratios; all but the last part round up."""
    total = int(sum(ratios))
    sizes = [-(-n * int(r) // total) for r in ratios[:-1]]
    sizes.append(n - int(sum(sizes)))
    if sizes[-1] < 0:
        raise ValueError(f"cannot split {n} rows by {list(ratios)}")
    return sizes


def split_indices(n: int, ratios: Sequence[int], seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    cuts = np.cumsum(split_sizes(n, ratios))[:-1]
    return np.split(perm, cuts)


def parse_ratios(text: str) -> list[int]:
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise ValueError(f"bad split ratios {text!r}, expected e.g. 7:2:1") from None
    if len(parts) != 3 or any(p <= 0 for p in parts):
        raise ValueError(f"bad split ratios {text!r}, expected three positive integers")
    return parts


def load_splits(*, data: str | Path | None = None, ratios: Sequence[int] = (7, 2, 1),
                train: str | Path | None = None, val: str | Path | None = None,
                test: str | Path | None = None, seed: int = 0, delimiter: str = ",",
                min_feature_count: int = 1,
                numeric_fields: Iterable[str] = ()) -> tuple[Dataset, Dataset, Dataset]:
    """Read either one file split by ratio or three explicit files.

    The vocabulary is always built from the training portion only.
    """
    numeric_fields = tuple(numeric_fields)
    if data is not None:
        table = read_table(data, delimiter, numeric_fields)
        parts = [table.subset(ix) for ix in split_indices(len(table), ratios, seed)]
    else:
        if train is None or val is None or test is None:
            raise ValueError("need --data or all of --train/--val/--test")
        parts = [read_table(p, delimiter, numeric_fields) for p in (train, val, test)]
    vocab = build_vocab(parts[0], min_feature_count)
    tr, va, te = (encode(p, vocab) for p in parts)
    return tr, va, te
