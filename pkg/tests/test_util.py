import math

import numpy as np
import pytest

from normgeo.errors import InputError
from normgeo.util import canonical_json, line_fit, substream


def test_substream_reproducible():
    a = substream(3, 1, 2).standard_normal(5)
    b = substream(3, 1, 2).standard_normal(5)
    assert np.array_equal(a, b)


def test_substream_paths_differ():
    a = substream(3, 1, 2).standard_normal(5)
    b = substream(3, 1, 3).standard_normal(5)
    c = substream(4, 1, 2).standard_normal(5)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_canonical_json_sorted_keys():
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_canonical_json_floats_17_digits():
    s = canonical_json({"x": 1.0 / 3.0})
    assert s == '{"x":0.33333333333333331}'
    # ints stay ints, floats keep a marker
    assert canonical_json([1, 1.0]) == "[1,1.0]"


def test_canonical_json_nonfinite_to_null():
    assert canonical_json([math.inf, math.nan, None]) == "[null,null,null]"


def test_canonical_json_arrays_and_bools():
    s = canonical_json({"v": np.array([1.5, 2.5]), "ok": True})
    assert s == '{"ok":true,"v":[1.5,2.5]}'


def test_canonical_json_stable_bytes():
    obj = {"a": [0.1, 0.2, {"z": 3, "y": math.pi}], "b": "s"}
    assert canonical_json(obj) == canonical_json(obj)


def test_canonical_json_rejects_unknown():
    with pytest.raises(InputError):
        canonical_json({"x": object()})


def test_line_fit_planted_half_power():
    # err = C * n^(-1/2) in log-log space must recover the slope exactly
    n = np.array([100.0, 200.0, 400.0, 800.0, 1600.0])
    err = 3.7 * n**-0.5
    fit = line_fit(np.log(n), np.log(err))
    assert abs(fit.slope - (-0.5)) < 1e-12
    assert abs(fit.r2 - 1.0) < 1e-12
    assert abs(fit.intercept - math.log(3.7)) < 1e-12


def test_line_fit_errors():
    with pytest.raises(InputError):
        line_fit([1.0], [2.0])
    with pytest.raises(InputError):
        line_fit([1.0, 1.0], [2.0, 3.0])
    with pytest.raises(InputError):
        line_fit([1.0, 2.0], [[2.0], [3.0]])
