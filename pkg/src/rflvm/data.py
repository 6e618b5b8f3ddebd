"""Observation matrices with missingness masks, labels, and time indices."""

import csv
import io
from dataclasses import dataclass

import numpy as np

COUNT_KINDS = ("poisson", "binomial", "negative_binomial", "multinomial")
RESERVED_COLUMNS = ("label", "time")


@dataclass
class Dataset:
    """An N x J observation matrix.

    mask is True where the entry is observed; the engine never reads a
    masked entry of Y (held-out values may be stored there for later
    evaluation). labels and time are optional per-row annotations.
    """
    Y: np.ndarray
    mask: np.ndarray = None
    labels: np.ndarray = None
    time: np.ndarray = None
    provenance: str = ""

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim != 2:
            raise ValueError("Y must be a 2-D matrix")
        if self.mask is None:
            self.mask = np.ones(self.Y.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.Y.shape:
            raise ValueError("mask shape must match Y")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.Y.shape[0],):
                raise ValueError("labels must have one entry per row")
        if self.time is not None:
            self.time = np.asarray(self.time, dtype=float)
            if self.time.shape != (self.Y.shape[0],):
                raise ValueError("time must have one entry per row")
            if np.any(np.diff(self.time) < 0):
                raise ValueError("time index must be nondecreasing")

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def n_features(self):
        return self.Y.shape[1]

    def require_counts(self):
        y = self.Y[self.mask]
        if np.any(y < 0) or not np.allclose(y, np.round(y)):
            raise ValueError("count likelihoods require nonnegative "
                             "integer observations")

    def require_observed_columns(self):
        if not np.all(self.mask.any(axis=0)):
            bad = int(np.flatnonzero(~self.mask.any(axis=0))[0])
            raise ValueError(f"column {bad} has no observed entries")


def mask_random(data, frac, rng):
    """Hold out `frac` of the observed entries uniformly at random.

    Returns a new Dataset whose mask is False at the held-out positions.
    Keeps at least one observed entry per column by re-drawing the
    affected entries deterministically from the same stream.
    """
    if not 0.0 <= frac < 1.0:
        raise ValueError("frac must lie in [0, 1)")
    obs = np.flatnonzero(data.mask.ravel())
    n_hold = int(round(frac * obs.size))
    while True:
        held = rng.choice(obs, size=n_hold, replace=False)
        mask = data.mask.copy()
        mask.ravel()[held] = False
        if np.all(mask.any(axis=0)):
            break
    return Dataset(Y=data.Y.copy(), mask=mask, labels=data.labels,
                   time=data.time, provenance=data.provenance)


def _parse_cell(text, row_idx, col_name, missing_token):
    text = text.strip()
    if text == missing_token:
        return 0.0, False
    try:
        return float(text), True
    except ValueError:
        raise ValueError(
            f"non-numeric cell {text!r} at row {row_idx}, "
            f"column {col_name!r}") from None


def load_csv(path, delimiter=",", missing_token="NA", label_column="label",
             time_column="time"):
    """Read a Dataset from a headered CSV file.

    Cells equal to `missing_token` are masked out (stored as 0). Columns
    named `label` and `time` are extracted as annotations rather than
    features. Ragged rows and non-numeric cells raise errors naming the
    offending row and column.
    """
    with open(path, "r", newline="") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        rows = list(reader)
    if not rows or not any(rows):
        raise ValueError(f"empty CSV file: {path}")
    header = [h.strip() for h in rows[0]]
    n_cols = len(header)
    label_idx = header.index(label_column) if label_column in header else None
    time_idx = header.index(time_column) if time_column in header else None
    feature_idx = [i for i in range(n_cols)
                   if i not in (label_idx, time_idx)]
    y_rows, mask_rows, labels, times = [], [], [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise ValueError(
                f"row {r} has {len(row)} cells, expected {n_cols}")
        vals, obs = [], []
        for i in feature_idx:
            v, seen = _parse_cell(row[i], r, header[i], missing_token)
            vals.append(v)
            obs.append(seen)
        y_rows.append(vals)
        mask_rows.append(obs)
        if label_idx is not None:
            lv, _ = _parse_cell(row[label_idx], r, label_column, missing_token)
            labels.append(int(lv))
        if time_idx is not None:
            tv, _ = _parse_cell(row[time_idx], r, time_column, missing_token)
            times.append(tv)
    out = Dataset(
        Y=np.array(y_rows, dtype=float),
        mask=np.array(mask_rows, dtype=bool),
        labels=np.array(labels, dtype=int) if labels else None,
        time=np.array(times, dtype=float) if times else None,
        provenance=str(path))
    out.require_observed_columns()
    return out


def _format_value(v):
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def save_csv(data, path, delimiter=",", missing_token="NA"):
    """Write a Dataset as a headered CSV, round-tripping exactly."""
    n, j = data.Y.shape
    header = [f"y{k}" for k in range(j)]
    out = io.StringIO()
    writer = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    head = list(header)
    if data.labels is not None:
        head.append("label")
    if data.time is not None:
        head.append("time")
    writer.writerow(head)
    for i in range(n):
        row = [
            _format_value(data.Y[i, k]) if data.mask[i, k] else missing_token
            for k in range(j)
        ]
        if data.labels is not None:
            row.append(str(int(data.labels[i])))
        if data.time is not None:
            row.append(_format_value(data.time[i]))
        writer.writerow(row)
    with open(path, "w", newline="") as handle:
        handle.write(out.getvalue())
