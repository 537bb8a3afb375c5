"""On-disk cache of centralized solutions, keyed by objective fingerprint.

Values are stored as decimal text with 17 significant digits, enough to
round-trip every double exactly.
"""

import os

import numpy as np

from ..objectives import GroundTruth, solve_centralized


def _fmt(values):
    return " ".join(f"{v:.17g}" for v in np.ravel(values))


def cache_path(directory, obj):
    return os.path.join(directory, f"ground_truth_{obj.fingerprint()}.txt")


def save_ground_truth(path, gt):
    with open(path, "w") as fh:
        fh.write(f"x_star {_fmt(gt.x_star)}\n")
        fh.write(f"f_star {gt.f_star:.17g}\n")
        fh.write(f"iterations {int(gt.iterations or 0)}\n")
        for row in gt.u_star:
            fh.write(f"u_star {_fmt(row)}\n")


def load_ground_truth(path):
    x_star, f_star, iters, u = None, None, 0, []
    with open(path) as fh:
        for line in fh:
            key, *vals = line.split()
            if key == "x_star":
                x_star = np.array(vals, dtype=float)
            elif key == "f_star":
                f_star = float(vals[0])
            elif key == "iterations":
                iters = int(vals[0])
            elif key == "u_star":
                u.append(np.array(vals, dtype=float))
    if x_star is None or f_star is None or not u:
        raise ValueError(f"incomplete ground-truth file {path}")
    return GroundTruth(x_star, f_star, np.vstack(u), iters)


def ground_truth(obj, directory=None):
    """Solve ``obj`` centrally, reusing a cached solution when one exists."""
    if directory is None:
        return solve_centralized(obj)
    path = cache_path(directory, obj)
    if os.path.exists(path):
        return load_ground_truth(path)
    gt = solve_centralized(obj)
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.{os.getpid()}.tmp"
    save_ground_truth(tmp, gt)
    os.replace(tmp, path)
    return gt
