"""CSV ingestion and emission, registration shifts and the knot-count heuristic."""
from __future__ import annotations

import csv
import math
from collections import OrderedDict

import numpy as np

from .models import FunctionalDataset, TimeSeriesDataset
from .partition import canonicalize


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


def _rows(path, header):
    """Yield ``(line_number, fields)`` after checking the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise ParseError("%s: empty file" % path) from None
        if [h.strip() for h in head] != list(header):
            raise ParseError("%s:1: expected header %s, got %s" % (path, ",".join(header),
                                                                   ",".join(head)))
        for row in reader:
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise ParseError("%s:%d: expected %d fields, got %d"
                                 % (path, reader.line_num, len(header), len(row)))
            yield reader.line_num, [f.strip() for f in row]


def _number(path, line, text, kind=float):
    try:
        v = kind(text)
    except ValueError:
        raise ParseError("%s:%d: cannot parse %r as %s" % (path, line, text, kind.__name__)) \
            from None
    if kind is float and not math.isfinite(v):
        raise ParseError("%s:%d: non-finite value %r" % (path, line, text))
    return v


def load_functional_csv(path) -> FunctionalDataset:
    """Read long-format ``series_id,x,y`` rows into one sorted curve per series."""
    series = OrderedDict()
    for line, (sid, xs, ys) in _rows(path, ("series_id", "x", "y")):
        x = _number(path, line, xs)
        y = _number(path, line, ys)
        pts = series.setdefault(sid, {})
        if x in pts:
            raise ValidationError("%s:%d: duplicate point x=%g for series %r"
                                  % (path, line, x, sid))
        pts[x] = y
    if not series:
        raise ValidationError("%s: no data rows" % path)
    xs, ys = [], []
    for pts in series.values():
        order = sorted(pts)
        xs.append(np.array(order))
        ys.append(np.array([pts[x] for x in order]))
    return FunctionalDataset(xs, ys, list(series))


def load_timeseries_csv(path) -> TimeSeriesDataset:
    """Read ``series_id,k,y`` rows; every series must cover the same indices 0..K-1."""
    series = OrderedDict()
    for line, (sid, ks, ys) in _rows(path, ("series_id", "k", "y")):
        k = _number(path, line, ks, int)
        pts = series.setdefault(sid, {})
        if k in pts:
            raise ValidationError("%s:%d: duplicate index k=%d for series %r"
                                  % (path, line, k, sid))
        pts[k] = _number(path, line, ys)
    if not series:
        raise ValidationError("%s: no data rows" % path)
    K = 1 + max(max(p) for p in series.values())
    Y = np.empty((len(series), K))
    for i, (sid, pts) in enumerate(series.items()):
        if sorted(pts) != list(range(K)):
            raise ValidationError("%s: series %r does not cover indices 0..%d" % (path, sid, K - 1))
        Y[i] = [pts[k] for k in range(K)]
    return TimeSeriesDataset(Y, list(series))


def load_cluster_matrix(path, ids=None):
    """Read ``series_id,k,label`` rows into a column-canonical (n, K) label matrix.

    Returns ``(C, ids)``; if ``ids`` is given, rows follow that order.
    """
    series = OrderedDict()
    for line, (sid, ks, ls) in _rows(path, ("series_id", "k", "label")):
        k = _number(path, line, ks, int)
        lab = _number(path, line, ls, int)
        pts = series.setdefault(sid, {})
        if k in pts:
            raise ValidationError("%s:%d: duplicate index k=%d for series %r"
                                  % (path, line, k, sid))
        pts[k] = lab
    if ids is None:
        ids = list(series)
    missing = [s for s in ids if s not in series]
    if missing:
        raise ValidationError("%s: no labels for series %s" % (path, missing))
    K = 1 + max(max(p) for p in series.values())
    C = np.empty((len(ids), K), dtype=np.int64)
    for i, sid in enumerate(ids):
        if sorted(series[sid]) != list(range(K)):
            raise ValidationError("%s: series %r does not cover indices 0..%d" % (path, sid, K - 1))
        C[i] = [series[sid][k] for k in range(K)]
    for k in range(K):
        C[:, k] = canonicalize(C[:, k])
    return C, list(ids)


def write_functional_csv(path, data: FunctionalDataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "x", "y"])
        for sid, x, y in zip(data.ids, data.x, data.y):
            for a, b in zip(x, y):
                w.writerow([sid, repr(float(a)), repr(float(b))])


def write_timeseries_csv(path, data: TimeSeriesDataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "k", "y"])
        for sid, row in zip(data.ids, data.Y):
            for k, v in enumerate(row):
                w.writerow([sid, k, repr(float(v))])


def write_cluster_matrix(path, C, ids):
    C = np.asarray(C)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "k", "label"])
        for sid, row in zip(ids, C):
            for k, lab in enumerate(row):
                w.writerow([sid, k, int(lab)])


def register_shift(data: FunctionalDataset, shifts: dict) -> FunctionalDataset:
    """Subtract a per-series shift (default 0) from the evaluation points."""
    unknown = set(shifts) - set(data.ids)
    if unknown:
        raise ValidationError("shifts given for unknown series %s" % sorted(unknown))
    xs = [x - float(shifts.get(sid, 0.0)) for sid, x in zip(data.ids, data.x)]
    return FunctionalDataset(xs, [y.copy() for y in data.y], list(data.ids))


def default_knot_count(data: FunctionalDataset, degree: int = 3) -> int:
    """Largest number of points per curve divided by three, rounded up, at least ``degree + 1``."""
    return max(int(math.ceil(int(data.num_points.max()) / 3)), degree + 1)
