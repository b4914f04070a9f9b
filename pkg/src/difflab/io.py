"""CSV/JSON persistence.  Floats are written with 17 significant digits so
every file round-trips bit-exactly."""

import csv
import json
from pathlib import Path

import numpy as np

from .pointset import PointSet


def fmt(x):
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _read_rows(path):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r]
    return header, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- point sets

def write_pointset(path, ps):
    path = Path(path)
    header = [f"x{j + 1}" for j in range(ps.dim)]
    _write_rows(path, header, ([fmt(v) for v in row] for row in ps.points))
    write_json(path.with_suffix(".json"), {
        "dim": ps.dim, "descriptor": ps.descriptor, "separation_radius": ps.separation_radius,
        "claimed_density": ps.claimed_density, "generation_radius": ps.generation_radius,
        "n_points": len(ps)})
    return path


def read_pointset(path):
    path = Path(path)
    header, rows = _read_rows(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    pts = np.array(rows, dtype=float).reshape(-1, len(header))
    return PointSet(meta["dim"], pts, meta["separation_radius"], meta["generation_radius"],
                    meta["claimed_density"], meta["descriptor"])


def write_perturbed(prefix, pps):
    prefix = Path(prefix)
    base = write_pointset(prefix.with_name(prefix.name + "_base.csv"), pps.base)
    header = [f"xi{j + 1}" for j in range(pps.base.dim)]
    disp = _write_rows(prefix.with_name(prefix.name + "_displacements.csv"), header,
                       ([fmt(v) for v in row] for row in pps.displacements))
    return base, disp


def read_displacements(path):
    header, rows = _read_rows(path)
    return np.array(rows, dtype=float).reshape(-1, len(header))


# ---------------------------------------------------------------- spectra and friends

def write_spectrum(path, spectrum):
    d = spectrum.frequencies.shape[1]
    header = [f"lambda_{j + 1}" for j in range(d)] + ["re", "im", "R", "kind"]
    rows = ([fmt(v) for v in f] + [fmt(z.real), fmt(z.imag), fmt(spectrum.R), spectrum.kind]
            for f, z in zip(spectrum.frequencies, spectrum.values))
    return _write_rows(path, header, rows)


def read_spectrum(path):
    header, rows = _read_rows(path)
    d = sum(h.startswith("lambda_") for h in header)
    if not rows:
        return np.zeros((0, d)), np.zeros(0, complex), None, None
    arr = np.array([r[:d + 3] for r in rows], float)
    return arr[:, :d], arr[:, d] + 1j * arr[:, d + 1], float(arr[0, d + 2]), rows[0][d + 3]


def write_autocorrelation(path, ac):
    d = ac.lags.shape[1]
    header = [f"k_{j + 1}" for j in range(d)] + ["re", "im", "pair_count"]
    rows = ([fmt(v) for v in k] + [fmt(c.real), fmt(c.imag), str(int(n))]
            for k, c, n in zip(ac.lags, ac.coefficients, ac.pair_counts))
    return _write_rows(path, header, rows)


def write_structure(path, sf):
    d = sf.frequencies.shape[1]
    header = [f"lambda_{j + 1}" for j in range(d)] + ["S", "stderr", "n"]
    rows = ([fmt(v) for v in f] + [fmt(s), fmt(e), str(sf.n_realizations)]
            for f, s, e in zip(sf.frequencies, sf.S, sf.std_error))
    return _write_rows(path, header, rows)


def write_trace(path, n, value):
    return _write_rows(path, ["n", "value"], ([fmt(a) if not float(a).is_integer() else str(int(a)), fmt(b)]
                                              for a, b in zip(n, value)))


def read_trace(path):
    _, rows = _read_rows(path)
    if not rows:
        return np.zeros(0), np.zeros(0)
    arr = np.array(rows, float)
    return arr[:, 0], arr[:, 1]


def write_grid(path, gm):
    d = gm.densities.ndim
    idx = np.indices(gm.densities.shape).reshape(d, -1).T
    header = [f"cell_index_{j + 1}" for j in range(d)] + ["density"]
    rows = ([str(int(i)) for i in ix] + [fmt(v)] for ix, v in zip(idx, gm.densities.ravel()))
    return _write_rows(path, header, rows)


def write_recovery(path, report):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json() + "\n")
    return path
