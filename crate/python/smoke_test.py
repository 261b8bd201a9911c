"""Smoke test for the compiled extension.

Build with `cargo build -p jse-py --release`, copy
target/release/libjse.so to python/jse.so, then run this script.
"""

import csv
import io
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import jse  # noqa: E402


def main():
    train, val, test = jse.gen_toy(0.8, n=2000, seed=7)
    assert (train.n, val.n, test.n, train.dim) == (1600, 400, 2000, 20)
    assert len(train.z) == 1600 and len(train.y_mt) == 1600

    sub = jse.jse_fit(train, val, seed=1)
    assert sub.d_sp == 1, sub
    v = sub.sp_basis[0]
    assert abs(math.hypot(*v) - 1.0) < 1e-9
    assert abs(v[0]) > 0.95, v[:3]

    cleaned = sub.transform(test)
    assert cleaned.n == test.n
    dots = [sum(a * b for a, b in zip(row, v)) for row in cleaned.z[:50]]
    assert max(abs(x) for x in dots) < 1e-9

    fitted = jse.fit_method("jse", train, val, seed=3)
    groups, worst, average, _ = fitted.evaluate(test)
    assert worst <= average <= max(groups)
    assert average > 75.0, average

    erm = jse.fit_method("erm", train, val, seed=3)
    assert erm.d_sp_hat is None

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "train.csv")
        train.save(path)
        back = jse.Dataset.load(path)
        assert back.y_sp == train.y_sp and back.z == train.z

    small = jse.Dataset([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [0.2, 0.1]], [0, 0, 1, 1], [0, 1, 0, 1])
    assert small.group_counts() == [1, 1, 1, 1]

    try:
        jse.fit_method("nope", train, val)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown method accepted")

    text = jse.sweep('[experiment]\nmethods = ["erm"]\nseeds = 2\ngrid = [0.5]\n[toy]\nn = 500\n')
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 2 and rows[0]["method"] == "erm"

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
