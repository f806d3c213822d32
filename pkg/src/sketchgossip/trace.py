"""Per-iteration metric records and CSV round-tripping."""

from __future__ import annotations

import csv
import io
from collections import defaultdict

import numpy as np

from .errors import InvalidInputError

CSV_HEADER = ("trial", "iteration", "metric", "value")


class Trace:
    """Ordered collection of ``(trial, iteration, metric, value)`` records.

    Within one trial and metric the iteration index must strictly increase
    and every value must be finite.
    """

    def __init__(self, records=()):
        self._records = []
        self._last = {}
        for rec in records:
            self.add(*rec)

    def add(self, trial, iteration, metric, value):
        trial, iteration, value = int(trial), int(iteration), float(value)
        if not np.isfinite(value):
            raise InvalidInputError(f"non-finite value for {metric} at iteration {iteration}")
        key = (trial, metric)
        if key in self._last and iteration <= self._last[key]:
            raise InvalidInputError("iterations must strictly increase within a trial")
        self._last[key] = iteration
        self._records.append((trial, iteration, str(metric), value))

    def extend(self, other):
        for rec in other:
            self.add(*rec)
        return self

    def __iter__(self):
        return iter(self._records)

    def __len__(self):
        return len(self._records)

    def __eq__(self, other):
        return isinstance(other, Trace) and self._records == other._records

    @property
    def records(self):
        return list(self._records)

    def metrics(self):
        seen = []
        for _, _, m, _ in self._records:
            if m not in seen:
                seen.append(m)
        return seen

    def trials(self):
        return sorted({t for t, _, _, _ in self._records})

    def series(self, metric, trial=None):
        """``(iterations, values)`` arrays for one metric (and trial)."""
        pts = [(k, v) for t, k, m, v in self._records
               if m == metric and (trial is None or t == trial)]
        if not pts:
            return np.array([], dtype=int), np.array([])
        k, v = zip(*pts)
        return np.array(k), np.array(v)

    def mean_series(self, metric):
        """Mean over trials at each iteration where every trial has a record."""
        by_iter = defaultdict(list)
        for t, k, m, v in self._records:
            if m == metric:
                by_iter[k].append(v)
        ntr = len({t for t, _, m, _ in self._records if m == metric})
        ks = sorted(k for k, vs in by_iter.items() if len(vs) == ntr)
        return np.array(ks, dtype=int), np.array([np.mean(by_iter[k]) for k in ks])

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, k, m, v in self._records:
            w.writerow((t, k, m, repr(v)))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise InvalidInputError("CSV header must be trial,iteration,metric,value")
        return cls((int(t), int(k), m, float(v)) for t, k, m, v in rows[1:])

    @classmethod
    def read_csv(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


def fit_decay(iterations, values, start=0):
    """Geometric decay factor from a least-squares fit of log(values).

    Points with ``iterations < start`` and non-positive values are dropped.
    """
    k = np.asarray(iterations, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (k >= start) & (v > 0)
    if keep.sum() < 2:
        raise InvalidInputError("need at least two positive points to fit a decay")
    slope = np.polyfit(k[keep], np.log(v[keep]), 1)[0]
    return float(np.exp(slope))
