"""Problem bundles on disk.

A bundle is a directory holding a JSON manifest plus data files::

    problem.json   {"format": "physarum-bp-problem/1", "n": .., "m": ..,
                    "A": "A.mtx", "w": "w.txt", "f": "f.txt",
                    "x_true": "x_true.txt",      (optional)
                    "ground": [0, ...],          (optional)
                    "seed": 1,                   (optional)
                    "meta": {...}}               (optional)
    A.mtx          Matrix Market; "array" -> dense A, "coordinate" -> sparse A
    *.txt          one number per line

Paths in the manifest are relative to the manifest's directory.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .core import BasisPursuitProblem, InputError

FORMAT = "physarum-bp-problem/1"


class ProblemFileNotFound(InputError):
    pass


def write_vector(path: Path, x: np.ndarray) -> None:
    with open(path, "w") as fh:
        for value in np.asarray(x, dtype=np.float64):
            fh.write(f"{float(value)!r}\n")


def read_vector(path: Path) -> np.ndarray:
    if not Path(path).is_file():
        raise ProblemFileNotFound(f"problem file not found: {path}")
    return np.atleast_1d(np.loadtxt(path, dtype=np.float64, ndmin=1))


def write_matrix(path: Path, A) -> None:
    if sp.issparse(A):
        scipy.io.mmwrite(str(path), sp.coo_matrix(A), precision=17)
    else:
        scipy.io.mmwrite(str(path), np.asarray(A), precision=17)


def read_matrix(path: Path):
    if not Path(path).is_file():
        raise ProblemFileNotFound(f"problem file not found: {path}")
    with open(path) as fh:
        header = fh.readline().lower()
    if not header.startswith("%%matrixmarket"):
        raise InputError(f"{path} is not a Matrix Market file")
    A = scipy.io.mmread(str(path))
    if "coordinate" in header:
        return sp.csc_matrix(A, dtype=np.float64)
    return np.ascontiguousarray(A, dtype=np.float64)


def save_problem(problem: BasisPursuitProblem, directory: str | os.PathLike, name: str = "problem.json") -> Path:
    """Write ``problem`` as a bundle; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "A.mtx", problem.A)
    write_vector(d / "w.txt", problem.w)
    write_vector(d / "f.txt", problem.f)
    manifest = {
        "format": FORMAT,
        "n": problem.n,
        "m": problem.m,
        "A": "A.mtx",
        "w": "w.txt",
        "f": "f.txt",
    }
    if problem.x_true is not None:
        write_vector(d / "x_true.txt", problem.x_true)
        manifest["x_true"] = "x_true.txt"
    if problem.ground:
        manifest["ground"] = list(problem.ground)
    if "seed" in problem.meta:
        manifest["seed"] = problem.meta["seed"]
    if problem.meta:
        manifest["meta"] = problem.meta
    path = d / name
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_problem(manifest_path: str | os.PathLike) -> BasisPursuitProblem:
    path = Path(manifest_path)
    if not path.is_file():
        raise ProblemFileNotFound(f"problem file not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("A", "w", "f"):
        if key not in manifest:
            raise InputError(f"{path}: manifest lacks '{key}'")
    base = path.parent
    A = read_matrix(base / manifest["A"])
    w = read_vector(base / manifest["w"])
    f = read_vector(base / manifest["f"])
    x_true = read_vector(base / manifest["x_true"]) if manifest.get("x_true") else None
    problem = BasisPursuitProblem(
        A, w, f, x_true, tuple(manifest.get("ground", ())), dict(manifest.get("meta", {}))
    )
    for key, actual in (("n", problem.n), ("m", problem.m)):
        if key in manifest and int(manifest[key]) != actual:
            raise InputError(f"{path}: manifest says {key}={manifest[key]}, data has {actual}")
    return problem
