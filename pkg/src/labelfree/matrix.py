"""Prediction matrices, their CSV/JSON wire formats, and unanimous-row pruning.

A prediction matrix records, for m samples and n models, the class index each
model assigned to each sample.  Matrices are immutable once constructed and
may be shared freely across threads.

CSV format::

    #classes=10          (optional directive; inferred as max label + 1 when absent)
    sample_id,model_a,model_b
    x1,0,1
    x2,2,2

JSON format: an object with keys ``model_names``, ``sample_ids``,
``num_classes`` and ``labels`` (row-major list of rows).  A JSON document is
accepted anywhere the CSV form is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ParseError",
    "NoDiscriminatingDataError",
    "PredictionMatrix",
    "PrunedMatrix",
    "GroundTruth",
    "parse_predictions",
    "parse_predictions_csv",
    "parse_predictions_json",
    "parse_ground_truth_csv",
    "format_predictions_csv",
    "format_predictions_json",
    "format_ground_truth_csv",
    "prune",
]

CLASSES_DIRECTIVE = "#classes="


class ParseError(ValueError):
    """A predictions or ground-truth document could not be parsed."""


class NoDiscriminatingDataError(ValueError):
    """Every sample received the same label from all models, so nothing
    distinguishes them; downstream rankers must report all models tied."""


def _check_unique(kind: str, values: Sequence[str]) -> None:
    seen = set()
    for v in values:
        if not isinstance(v, str) or v == "":
            raise ValueError(f"{kind} must be non-empty strings, got {v!r}")
        if v in seen:
            raise ValueError(f"duplicate {kind} {v!r}")
        seen.add(v)


def _frozen_int_array(values, ndim: int) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != ndim or not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"expected a {ndim}-d integer array, got {arr.dtype} with shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PredictionMatrix:
    """Predicted class indices for m samples (rows) by n models (columns).

    ``labels[i, j]`` is the class index that ``model_names[j]`` assigned to
    ``sample_ids[i]``.  Every entry lies in ``[0, num_classes)``.
    """

    model_names: tuple[str, ...]
    sample_ids: tuple[str, ...]
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "model_names", tuple(self.model_names))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "labels", _frozen_int_array(self.labels, 2))
        _check_unique("model name", self.model_names)
        _check_unique("sample id", self.sample_ids)
        m, n = self.labels.shape
        if n < 2:
            raise ValueError(f"need at least 2 models, got {n}")
        if m < 1:
            raise ValueError("need at least 1 sample")
        if len(self.model_names) != n:
            raise ValueError(f"{len(self.model_names)} model names for {n} label columns")
        if len(self.sample_ids) != m:
            raise ValueError(f"{len(self.sample_ids)} sample ids for {m} label rows")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {self.num_classes}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    @property
    def num_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def num_models(self) -> int:
        return self.labels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PredictionMatrix):
            return NotImplemented
        return (
            self.model_names == other.model_names
            and self.sample_ids == other.sample_ids
            and self.num_classes == other.num_classes
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None

    def take_rows(self, indices: np.ndarray) -> "PredictionMatrix":
        """New matrix holding the given rows, in the given order."""
        ids = tuple(self.sample_ids[i] for i in indices)
        return PredictionMatrix(self.model_names, ids, self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class PrunedMatrix:
    """A prediction matrix restricted to rows where the models disagree.

    ``origin_index[k]`` is the row of the source matrix that became retained
    row ``k``; ``pruned_count`` rows were unanimous and dropped.
    """

    inner: PredictionMatrix
    origin_index: np.ndarray
    pruned_count: int

    def __post_init__(self):
        object.__setattr__(self, "origin_index", _frozen_int_array(self.origin_index, 1))
        if len(self.origin_index) != self.inner.num_samples:
            raise ValueError("origin_index length must equal retained row count")
        if len(self.origin_index) > 1 and not (np.diff(self.origin_index) > 0).all():
            raise ValueError("origin_index must be strictly increasing")
        if self.pruned_count < 0:
            raise ValueError("pruned_count must be non-negative")
        lab = self.inner.labels
        if ((lab == lab[:, :1]).all(axis=1)).any():
            raise ValueError("retained rows must contain at least 2 distinct labels")

    def __eq__(self, other):
        if not isinstance(other, PrunedMatrix):
            return NotImplemented
        return (
            self.inner == other.inner
            and self.pruned_count == other.pruned_count
            and np.array_equal(self.origin_index, other.origin_index)
        )

    __hash__ = None


@dataclass(frozen=True)
class GroundTruth:
    """True class labels keyed by sample id."""

    sample_ids: tuple[str, ...]
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "labels", _frozen_int_array(self.labels, 1))
        _check_unique("sample id", self.sample_ids)
        if len(self.sample_ids) != len(self.labels):
            raise ValueError("sample_ids and labels must have equal length")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")

    def __eq__(self, other):
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return self.sample_ids == other.sample_ids and np.array_equal(self.labels, other.labels)

    __hash__ = None

    def aligned_labels(self, sample_ids: Iterable[str]) -> np.ndarray:
        """True labels reordered to match ``sample_ids``.

        Raises ValueError listing any requested ids with no ground truth.
        """
        lookup = {sid: int(lab) for sid, lab in zip(self.sample_ids, self.labels)}
        missing = [sid for sid in sample_ids if sid not in lookup]
        if missing:
            raise ValueError(
                f"ground truth missing {len(missing)} sample ids: " + ", ".join(missing)
            )
        return np.array([lookup[sid] for sid in sample_ids], dtype=np.int64)


def prune(matrix: PredictionMatrix) -> PrunedMatrix:
    """Drop rows on which all models agree; they carry no ranking signal.

    Retained rows keep their original order.  Raises
    :class:`NoDiscriminatingDataError` when every row is unanimous.
    """
    lab = matrix.labels
    keep = np.flatnonzero((lab != lab[:, :1]).any(axis=1))
    if keep.size == 0:
        raise NoDiscriminatingDataError(
            "all rows are unanimous across models; models cannot be distinguished"
        )
    return PrunedMatrix(
        inner=matrix.take_rows(keep),
        origin_index=keep,
        pruned_count=matrix.num_samples - keep.size,
    )


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _nonblank_lines(text: str) -> list[str]:
    return [line for line in text.splitlines() if line.strip() != ""]


def _parse_label(token: str, row_name: str, col_name: str, num_classes: int | None) -> int:
    token = token.strip()
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"row {row_name}, column {col_name}: label {token!r} is not an integer")
    if value < 0:
        raise ParseError(f"row {row_name}, column {col_name}: label {value} is negative")
    if num_classes is not None and value >= num_classes:
        raise ParseError(
            f"row {row_name}, column {col_name}: label {value} outside [0, {num_classes})"
        )
    return value


def parse_predictions_csv(text: str) -> PredictionMatrix:
    """Parse the predictions CSV format (``\\n`` or ``\\r\\n`` line endings)."""
    lines = _nonblank_lines(text)
    num_classes: int | None = None
    if lines and lines[0].lstrip().startswith("#"):
        directive = lines.pop(0).strip()
        if not directive.startswith(CLASSES_DIRECTIVE):
            raise ParseError(f"unknown directive {directive!r}")
        try:
            num_classes = int(directive[len(CLASSES_DIRECTIVE):])
        except ValueError:
            raise ParseError(f"bad class count in directive {directive!r}")
        if num_classes < 1:
            raise ParseError(f"class count must be positive, got {num_classes}")
    if not lines:
        raise ParseError("no header row")
    header = [h.strip() for h in lines.pop(0).split(",")]
    if header[0] != "sample_id":
        raise ParseError(f"header must start with 'sample_id', got {header[0]!r}")
    model_names = header[1:]
    if len(model_names) < 2:
        raise ParseError(f"need at least 2 model columns, got {len(model_names)}")
    if not lines:
        raise ParseError("no samples")

    sample_ids: list[str] = []
    rows: list[list[int]] = []
    n = len(model_names)
    for line in lines:
        parts = line.split(",")
        sid = parts[0].strip()
        if sid == "":
            raise ParseError(f"empty sample id in row {line!r}")
        if len(parts) - 1 != n:
            raise ParseError(f"row {sid}: expected {n} labels, got {len(parts) - 1}")
        rows.append(
            [_parse_label(tok, sid, model_names[j], num_classes) for j, tok in enumerate(parts[1:])]
        )
        sample_ids.append(sid)

    labels = np.array(rows, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    try:
        return PredictionMatrix(tuple(model_names), tuple(sample_ids), labels, num_classes)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def parse_predictions_json(text: str) -> PredictionMatrix:
    """Parse the JSON alternative of the predictions format."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError("top-level JSON value must be an object")
    missing = [k for k in ("model_names", "sample_ids", "num_classes", "labels") if k not in obj]
    if missing:
        raise ParseError("missing JSON fields: " + ", ".join(missing))
    labels = obj["labels"]
    if not isinstance(labels, list) or any(not isinstance(r, list) for r in labels):
        raise ParseError("labels must be an array of arrays")
    for sid, row in zip(obj["sample_ids"], labels):
        for name, value in zip(obj["model_names"], row):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ParseError(f"row {sid}, column {name}: label {value!r} is not an integer")
    try:
        return PredictionMatrix(
            tuple(obj["model_names"]),
            tuple(obj["sample_ids"]),
            np.array(labels, dtype=np.int64),
            int(obj["num_classes"]),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc)) from exc


def parse_predictions(text: str) -> PredictionMatrix:
    """Parse predictions from either wire format, sniffing JSON by its first byte."""
    if text.lstrip()[:1] == "{":
        return parse_predictions_json(text)
    return parse_predictions_csv(text)


def parse_ground_truth_csv(text: str) -> GroundTruth:
    """Parse the ``sample_id,label`` ground-truth CSV."""
    lines = _nonblank_lines(text)
    if not lines:
        raise ParseError("no header row")
    header = [h.strip() for h in lines.pop(0).split(",")]
    if header != ["sample_id", "label"]:
        raise ParseError(f"expected header 'sample_id,label', got {','.join(header)!r}")
    if not lines:
        raise ParseError("no samples")
    ids: list[str] = []
    labels: list[int] = []
    for line in lines:
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"row {parts[0].strip()!r}: expected 1 label, got {len(parts) - 1}")
        sid = parts[0].strip()
        labels.append(_parse_label(parts[1], sid, "label", None))
        ids.append(sid)
    try:
        return GroundTruth(tuple(ids), np.array(labels, dtype=np.int64))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _check_csv_safe(kind: str, values: Iterable[str]) -> None:
    for v in values:
        if any(ch in v for ch in ",\r\n"):
            raise ValueError(f"{kind} {v!r} cannot be represented in CSV")


def format_predictions_csv(matrix: PredictionMatrix) -> str:
    """Serialize with an explicit ``#classes`` directive so parsing round-trips."""
    _check_csv_safe("model name", matrix.model_names)
    _check_csv_safe("sample id", matrix.sample_ids)
    out = [f"{CLASSES_DIRECTIVE}{matrix.num_classes}", "sample_id," + ",".join(matrix.model_names)]
    for sid, row in zip(matrix.sample_ids, matrix.labels):
        out.append(sid + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(out) + "\n"


def format_predictions_json(matrix: PredictionMatrix) -> str:
    obj = {
        "model_names": list(matrix.model_names),
        "sample_ids": list(matrix.sample_ids),
        "num_classes": matrix.num_classes,
        "labels": matrix.labels.tolist(),
    }
    return json.dumps(obj, indent=2) + "\n"


def format_ground_truth_csv(truth: GroundTruth) -> str:
    _check_csv_safe("sample id", truth.sample_ids)
    out = ["sample_id,label"]
    for sid, lab in zip(truth.sample_ids, truth.labels):
        out.append(f"{sid},{int(lab)}")
    return "\n".join(out) + "\n"
