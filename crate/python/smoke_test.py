"""Smoke test for the rdeg_py extension module.

Builds the module with cargo when it is not importable, then exercises the
main entry points. Run from anywhere: python3 python/smoke_test.py
"""

import importlib
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    try:
        return importlib.import_module("rdeg_py")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "rdeg-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    build_dir = tempfile.mkdtemp(prefix="rdeg_py_")
    shutil.copy(os.path.join(ROOT, "target", "release", "librdeg_py.so"), os.path.join(build_dir, "rdeg_py.so"))
    sys.path.insert(0, build_dir)
    return importlib.import_module("rdeg_py")


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * (1.0 + abs(b))


def main():
    rdeg = load_module()
    print("rdeg_py", rdeg.__version__)

    assert all(close(a, b) for a, b in zip(rdeg.project([3.0, 4.0], 1.0), [0.6, 0.8]))
    assert rdeg.project([0.3, 0.4], 1.0) == [0.3, 0.4]

    eps = rdeg.compute_epsilon(0.01, 0.01, 2400)
    assert close(eps, 0.08 + 24 * math.log(400) / 2400)
    try:
        rdeg.compute_epsilon(0.05, 0.01, 100)
    except ValueError as err:
        print("rejected as expected:", err)
    else:
        raise AssertionError("epsilon >= 1/2 should be rejected")

    assert rdeg.trimmed_mean_1d([0, 1, 2, 100], [0, 1, 2, 100], 0.25) == 1.25
    assert rdeg.trimmed_mean_1d([0, 10], [-5, 5], 0.0) == 2.5
    rows = [[5.0, -1.0]] * 8
    assert rdeg.trim_vectors(rows, 0.0, epsilon=0.25) == [5.0, -1.0]
    assert rdeg.mean_vectors([[0.0, 0.0], [2.0, 4.0]]) == [1.0, 2.0]

    problem = rdeg.Problem("scsc-quadratic")
    assert close(problem.smoothness, 1.1)
    x_star, y_star = problem.saddle
    assert problem.gap(x_star, y_star) <= 1e-9
    x0, y0 = problem.initial_point()
    assert problem.gap(x0, y0) > 0

    canonical = rdeg.parse_config("problem=bilinear-sec6\nrounds=300\n")
    assert "agents=100\n" in canonical
    try:
        rdeg.parse_config("problem=bilinear-sec6\nagents=99\n")
    except ValueError as err:
        print("rejected as expected:", err)
    else:
        raise AssertionError("odd agent count should be rejected for rdeg")

    first = rdeg.run(canonical)
    again = rdeg.run(canonical, workers=4)
    assert len(first["gap"]) == 300
    assert first["gap"] == again["gap"]
    assert first["error_floor"] > 0
    print(
        "bilinear-sec6, 300 rounds: final gap {:.4f}, error floor {:.4f}, epsilon {:.4f}".format(
            first["final_gap"], first["error_floor"], first["epsilon"]
        )
    )
    print("smoke test passed")


if __name__ == "__main__":
    main()
