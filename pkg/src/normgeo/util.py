"""Shared helpers: seeded RNG substreams, canonical JSON, least-squares line fits.

Every random quantity in the package is drawn from a generator built by
:func:`substream`, so a run is fully determined by one root seed plus the
integer path of the consumer.  Reductions over Monte-Carlo draws go through
numpy's pairwise summation (``np.sum`` / ``np.mean``), which keeps results
independent of chunking choices.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import InputError

__all__ = ["substream", "canonical_json", "write_json", "line_fit", "LineFit"]


def substream(seed, *path):
    """Return a Generator for the substream identified by (seed, *path).

    Distinct paths give statistically independent streams; the same path
    always reproduces the same stream.
    """
    entropy = [int(seed)] + [int(x) for x in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _fmt_float(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "null"
    s = format(float(x), ".17g")
    # keep a marker so ints and floats stay distinguishable after round-trip
    if "." not in s and "e" not in s and "n" not in s and "i" not in s:
        s += ".0"
    return s


def _canon(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, np.ndarray):
        _canon(obj.tolist(), out)
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _canon(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise InputError(f"JSON object keys must be strings, got {type(key).__name__}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=True))
            out.append(":")
            _canon(obj[key], out)
        out.append("}")
    elif hasattr(obj, "to_dict"):
        _canon(obj.to_dict(), out)
    else:
        raise InputError(f"cannot serialize {type(obj).__name__} to canonical JSON")
    return out


def canonical_json(obj):
    """Serialize to JSON with sorted keys and 17-significant-digit floats.

    The output is byte-stable: the same object always yields the same string.
    Non-finite floats serialize as null.
    """
    return "".join(_canon(obj, []))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj))
        fh.write("\n")


class LineFit:
    """Ordinary least-squares line y = slope*x + intercept with r^2."""

    __slots__ = ("slope", "intercept", "r2", "n_points")

    def __init__(self, slope, intercept, r2, n_points):
        self.slope = float(slope)
        self.intercept = float(intercept)
        self.r2 = float(r2)
        self.n_points = int(n_points)

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "n_points": self.n_points,
        }

    def __repr__(self):
        return (f"LineFit(slope={self.slope:.4g}, intercept={self.intercept:.4g}, "
                f"r2={self.r2:.4g}, n_points={self.n_points})")


def line_fit(x, y):
    """Least-squares straight line through (x, y); returns a LineFit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("line_fit expects two 1-d arrays of equal length")
    if x.size < 2:
        raise InputError("line_fit needs at least two points")
    xm = x.mean()
    ym = y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0.0:
        raise InputError("line_fit: x values are all identical")
    sxy = np.sum((x - xm) * (y - ym))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    syy = np.sum((y - ym) ** 2)
    r2 = 1.0 if syy == 0.0 else 1.0 - float(np.sum(resid**2)) / float(syy)
    return LineFit(slope, intercept, r2, x.size)
