"""Fourier-side estimators for finite point configurations.

Exponential sums are evaluated exactly (no gridding).  Phases are reduced
mod 1 before exponentiation, so integer inner products give exactly 1.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os

import numpy as np
from scipy.spatial import cKDTree

from .perturb import PerturbedPointSet, characteristic_function, ConfigurationError
from .pointset import (PointSet, Lattice, ball_volume, generate_lattice, enumerate_parallelepiped,
                       _lexsort_rows)

CHUNK = 32


def default_threads():
    try:
        return max(1, int(os.environ.get("DIFFLAB_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- frequency sets

@dataclass(frozen=True, eq=False)
class FrequencySet:
    frequencies: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "explicit"})
    amplitudes: np.ndarray = None

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.frequencies, float))
        if f.size == 0:
            f = f.reshape(0, f.shape[-1] if f.ndim == 2 else 1)
        q = np.round(f / 1e-12).astype(np.int64) if f.shape[0] else np.zeros((0, f.shape[1]), np.int64)
        _, first = np.unique(q, axis=0, return_index=True)
        first = np.sort(first)
        object.__setattr__(self, "frequencies", f[first])
        if self.amplitudes is not None:
            object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes)[first])

    def __len__(self):
        return self.frequencies.shape[0]

    @property
    def dim(self):
        return self.frequencies.shape[1]

    @classmethod
    def explicit(cls, values):
        return cls(np.asarray(values, float), {"kind": "explicit"})

    @classmethod
    def dual_lattice(cls, lattice, max_norm):
        ps = generate_lattice(lattice.dual(), max_norm)
        return cls(ps.points, {"kind": "dual_lattice", "max_norm": max_norm},
                   np.full(len(ps), 1.0 / lattice.covolume, dtype=complex))

    @classmethod
    def uniform_grid(cls, extent, step, d):
        ax = np.arange(-extent, extent + step / 2, step)
        grids = np.meshgrid(*[ax] * d, indexing="ij")
        return cls(np.stack([g.ravel() for g in grids], axis=1),
                   {"kind": "uniform_grid", "extent": extent, "step": step})

    @classmethod
    def dual_module(cls, scheme, max_norm, intensity_floor=1e-2, int_cap=None):
        """Bragg positions of a cut-and-project set with their analytic amplitudes.

        A dual lattice vector splits as (k_phys, k_int); the amplitude at
        k_phys is  (1/covol) * integral_W exp(2 pi i <k_int, y>) dy.  Only
        frequencies with |A| >= intensity_floor * dens are kept.
        """
        S = np.vstack([scheme.proj_phys, scheme.proj_int])
        Bd = np.linalg.inv(scheme.lattice_basis).T
        A = np.linalg.inv(S).T @ Bd
        d, k = scheme.d, scheme.k
        covol = abs(float(np.linalg.det(S @ scheme.lattice_basis)))
        dens = scheme.density
        if int_cap is None:
            wlo, whi = scheme.window.bounds()
            int_cap = 1.0 / (intensity_floor * float(np.min(whi - wlo)))
        lower = np.concatenate([-max_norm * np.ones(d), -int_cap * np.ones(k)])
        upper = -lower
        m = enumerate_parallelepiped(A, lower, upper)
        kk = m.astype(float) @ A.T
        kp, ki = kk[:, :d], kk[:, d:]
        amp = scheme.window.fourier(ki) / covol
        keep = (np.sum(kp ** 2, axis=1) <= max_norm ** 2) & (np.abs(amp) >= intensity_floor * dens)
        kp, amp = kp[keep], amp[keep]
        order = _lexsort_rows(kp)
        return cls(kp[order], {"kind": "dual_module", "scheme": scheme.name, "max_norm": max_norm,
                               "intensity_floor": intensity_floor}, amp[order])

    def strongest(self, n, half_space=True, exclude_zero=True):
        """The ``n`` frequencies of largest analytic amplitude."""
        if self.amplitudes is None:
            raise ValueError("no amplitudes attached")
        f = self.frequencies
        ok = np.ones(len(self), dtype=bool)
        if exclude_zero:
            ok &= np.any(np.abs(f) > 1e-12, axis=1)
        if half_space:
            ok &= _lex_positive(f)
        idx = np.flatnonzero(ok)
        order = idx[np.lexsort((idx, -np.abs(self.amplitudes[idx])))][:n]
        return FrequencySet(f[order], dict(self.provenance, selection=f"strongest {n}"), self.amplitudes[order])


def _lex_positive(f):
    out = np.zeros(f.shape[0], dtype=bool)
    undecided = np.ones(f.shape[0], dtype=bool)
    for j in range(f.shape[1]):
        out |= undecided & (f[:, j] > 0)
        undecided &= f[:, j] == 0
    return out


# ---------------------------------------------------------------- Fourier sums

@dataclass(frozen=True, eq=False)
class SpectralEstimate:
    frequency: np.ndarray
    value: complex
    R: float
    kind: str


@dataclass(frozen=True, eq=False)
class Spectrum:
    frequencies: np.ndarray
    values: np.ndarray
    R: float
    kind: str

    def __len__(self):
        return self.frequencies.shape[0]

    def __iter__(self):
        for f, v in zip(self.frequencies, self.values):
            yield SpectralEstimate(f, complex(v), self.R, self.kind)

    def __getitem__(self, i):
        return SpectralEstimate(self.frequencies[i], complex(self.values[i]), self.R, self.kind)


def _positions(obj, R, membership="perturbed"):
    if isinstance(obj, PerturbedPointSet):
        gen_r = obj.base.generation_radius
        if membership == "perturbed":
            pos = obj.positions
            keep = np.einsum("ij,ij->i", pos, pos) <= R * R
        else:
            keep = obj.base.norms <= R
            pos = obj.positions
    else:
        ps = obj if isinstance(obj, PointSet) else None
        gen_r = ps.generation_radius
        pos = ps.points
        keep = np.einsum("ij,ij->i", pos, pos) <= R * R
    if R > gen_r * (1 + 1e-12):
        raise ValueError(f"R={R} exceeds the generation radius {gen_r}")
    return pos[keep]


def _freq_array(freqs):
    if isinstance(freqs, FrequencySet):
        return freqs.frequencies
    return np.atleast_2d(np.asarray(freqs, float))


def exp_sums(pos, lam, weights=None, threads=None, exact=False):
    """sum_p w_p exp(-2 pi i <p, lam>) for every row of ``lam``."""
    lam = np.atleast_2d(lam)
    F = lam.shape[0]
    out = np.zeros(F, dtype=complex)
    if F == 0 or pos.shape[0] == 0:
        return out
    threads = default_threads() if threads is None else threads

    def work(i0):
        i1 = min(F, i0 + CHUNK)
        t = pos @ lam[i0:i1].T
        t -= np.round(t)
        e = np.exp(-2j * np.pi * t)
        if weights is not None:
            e *= weights[:, None]
        if exact:
            return i0, np.array([complex(math.fsum(c.real), math.fsum(c.imag)) for c in e.T])
        return i0, e.sum(axis=0)

    starts = range(0, F, CHUNK)
    if threads > 1 and F > CHUNK:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, starts))
    else:
        results = [work(s) for s in starts]
    for i0, v in results:
        out[i0:i0 + v.shape[0]] = v
    return out


def fourier_sum(obj, freqs, R, threads=None, exact=False, membership="perturbed"):
    """(1/Vol(B_R)) sum over points in B_R of exp(-2 pi i <p, lam>).

    For a perturbed set, ball membership is tested on the displaced
    positions unless ``membership="unperturbed"``.
    """
    lam = _freq_array(freqs)
    pos = _positions(obj, R, membership)
    d = pos.shape[1] if pos.ndim == 2 else lam.shape[1]
    vals = exp_sums(pos, lam, threads=threads, exact=exact) / ball_volume(d, R)
    return Spectrum(lam, vals, float(R), "FourierSum")


def periodogram(obj, freqs, R, threads=None, membership="perturbed"):
    """|sum_p exp(-2 pi i <p, lam>)|^2 / Vol(B_R)."""
    lam = _freq_array(freqs)
    pos = _positions(obj, R, membership)
    s = exp_sums(pos, lam, threads=threads)
    vals = (s.real ** 2 + s.imag ** 2) / ball_volume(lam.shape[1], R)
    return Spectrum(lam, vals.astype(complex), float(R), "Periodogram")


@dataclass
class WeakFourierResult:
    frequencies: np.ndarray
    radii: np.ndarray
    trace: np.ndarray          # (len(radii), F)
    estimate: np.ndarray
    status: list


def weak_fourier_transform(source, freqs, R_schedule, zero_tol=1e-2, threads=None):
    """Trace of the normalized Fourier sums over increasing radii.

    ``source`` is a PointSet generated at least up to max(R_schedule) or a
    callable R -> PointSet.  The estimate is the last-radius value.  Status is
    "zero" when |estimate| <= zero_tol, otherwise "converged" if the last
    increment is no larger than the first one and "non-convergent" if not.
    """
    radii = np.asarray(R_schedule, float)
    if radii.size < 3 or np.any(np.diff(radii) <= 0):
        raise ValueError("R_schedule needs at least three increasing radii")
    ps = source(radii[-1]) if callable(source) else source
    lam = _freq_array(freqs)
    trace = np.array([fourier_sum(ps, lam, R, threads=threads).values for R in radii])
    est = trace[-1]
    inc = np.abs(np.diff(trace, axis=0))
    status = []
    for j in range(lam.shape[0]):
        if abs(est[j]) <= zero_tol:
            status.append("zero")
        elif inc[-1, j] <= inc[0, j] or inc[-1, j] <= 1e-12:
            status.append("converged")
        else:
            status.append("non-convergent")
    return WeakFourierResult(lam, radii, trace, est, status)


# ---------------------------------------------------------------- autocorrelation

@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    positions: np.ndarray
    weights: np.ndarray
    ambient: str = "physical"

    def restrict(self, R):
        keep = np.einsum("ij,ij->i", self.positions, self.positions) <= R * R
        return AtomicMeasure(self.positions[keep], self.weights[keep], self.ambient)


@dataclass(frozen=True, eq=False)
class AutocorrEstimate:
    lags: np.ndarray
    coefficients: np.ndarray
    pair_counts: np.ndarray
    K: float
    R: float

    def coefficient(self, k, tol=1e-9):
        k = np.asarray(k, float)
        hit = np.flatnonzero(np.all(np.abs(self.lags - k) <= tol, axis=1))
        if hit.size == 0:
            return 0j
        return complex(self.coefficients[hit[0]])

    @property
    def zero_index(self):
        return int(np.flatnonzero(np.all(self.lags == 0, axis=1))[0])

    @property
    def nonzero(self):
        return np.any(self.lags != 0, axis=1)


class LagGeometry:
    """Unordered pairs within distance K, grouped by their (oriented) difference vector.

    Depends only on positions, so one geometry serves every realization of
    the weights on the same atoms.
    """

    def __init__(self, positions, K, quantum=1e-9):
        pos = np.asarray(positions, float)
        self.n = pos.shape[0]
        self.K = float(K)
        d = pos.shape[1]
        pairs = cKDTree(pos).query_pairs(K, output_type="ndarray") if self.n > 1 else np.zeros((0, 2), int)
        a, b = pairs[:, 0], pairs[:, 1]
        lag = pos[a] - pos[b]
        neg = ~_lex_positive(lag)
        a2 = np.where(neg, b, a)
        b2 = np.where(neg, a, b)
        lag[neg] = -lag[neg]
        if q_needs_rows := (d > 2):
            q = np.round(lag / quantum).astype(np.int64)
        else:
            # pack the quantized coordinates into one int64 so the unique is a 1-D sort
            quantum = max(quantum, 2.0 * self.K / 2.0 ** 30)
            span = np.int64(2 ** 31)
            qi = np.round(lag / quantum).astype(np.int64) + span // 2
            q = qi[:, 0] if d == 1 else qi[:, 0] * span + qi[:, 1]
        if lag.shape[0]:
            _, first, inv = np.unique(q, axis=0 if q_needs_rows else None, return_index=True, return_inverse=True)
            inv = inv.ravel()
            self.half_lags = lag[first]
        else:
            inv = np.zeros(0, dtype=np.int64)
            self.half_lags = np.zeros((0, d))
        self.a = a2.astype(np.int64)
        self.b = b2.astype(np.int64)
        self.inverse = inv
        self.half_counts = np.bincount(inv, minlength=self.half_lags.shape[0])
        self.dim = d


def autocorrelation(atoms, K, R, geometry=None):
    """(1/Vol(B_R)) sum_{p, p-k in B_R} mu(p) conj(mu(p-k)) for lags |k| <= K."""
    if K > R / 10.0:
        raise ConfigurationError("lag radius K must not exceed R/10")
    at = atoms.restrict(R)
    if geometry is None:
        geometry = LagGeometry(at.positions, K)
    elif geometry.n != at.positions.shape[0]:
        raise ValueError("geometry does not match the atoms")
    vol = ball_volume(at.positions.shape[1], R)
    w = at.weights
    prod = w[geometry.a] * np.conj(w[geometry.b])
    L = geometry.half_lags.shape[0]
    half = (np.bincount(geometry.inverse, weights=prod.real, minlength=L)
            + 1j * np.bincount(geometry.inverse, weights=prod.imag, minlength=L)) / vol
    c0 = np.sum(np.abs(w) ** 2) / vol
    d = geometry.dim
    lags = np.vstack([np.zeros((1, d)), geometry.half_lags, -geometry.half_lags])
    coef = np.concatenate([[c0], half, np.conj(half)])
    counts = np.concatenate([[w.shape[0]], geometry.half_counts, geometry.half_counts])
    return AutocorrEstimate(lags, coef, counts, float(K), float(R))


def mu_lambda_weights(pps, lam):
    """Weighted Dirac combs at the unperturbed points: exp(-2 pi i <p, lam>) and
    exp(-2 pi i <xi_p, lam>) - phi(lam)."""
    lam = np.asarray(lam, float)
    p = pps.base.points
    t = p @ lam
    t -= np.round(t)
    mx = np.exp(-2j * np.pi * t)
    phi = characteristic_function(pps.model, lam)
    s = pps.displacements @ lam
    mxi = np.exp(-2j * np.pi * s) - phi
    return AtomicMeasure(p, mx), AtomicMeasure(p, mxi)


def gamma_xi_lambda(pps, lam, K, R, geometry=None):
    _, mxi = mu_lambda_weights(pps, lam)
    return autocorrelation(mxi, K, R, geometry)


def residual_sum(pps, lam, R):
    """(1/Vol(B_R)) sum_{p in X, |p| <= R} e(-<p,lam>) (e(-<xi_p,lam>) - phi(lam))."""
    lam_arr = np.atleast_2d(np.asarray(lam, float))
    keep = pps.base.norms <= R
    p = pps.base.points[keep]
    xi = pps.displacements[keep]
    phi = np.atleast_1d(characteristic_function(pps.model, lam_arr))
    out = np.empty(lam_arr.shape[0], dtype=complex)
    for j, l in enumerate(lam_arr):
        t = p @ l
        t -= np.round(t)
        ex = np.exp(-2j * np.pi * t)
        out[j] = np.sum(ex * (np.exp(-2j * np.pi * (xi @ l)) - phi[j]))
    out /= ball_volume(pps.base.dim, R)
    return complex(out[0]) if np.asarray(lam).ndim == 1 else out


def escape_margin(model):
    dist = getattr(model, "dist", model)
    return min(10.0 * dist.scale, dist.support_radius)


def boundary_escape_fraction(pps, R):
    """Fractions (per unit volume) of points leaving / entering B_R under the displacement."""
    margin = escape_margin(pps.model)
    if pps.base.generation_radius < R + margin:
        raise ConfigurationError(f"base set must extend to at least R + {margin:g}")
    n0 = pps.base.norms
    pos = pps.positions
    n1 = np.sqrt(np.einsum("ij,ij->i", pos, pos))
    vol = ball_volume(pps.base.dim, R)
    out = np.count_nonzero((n0 <= R) & (n1 > R)) / vol
    inn = np.count_nonzero((n0 > R) & (n1 <= R)) / vol
    return out, inn


def side_switchers(pps, R):
    n0 = pps.base.norms
    n1 = np.linalg.norm(pps.positions, axis=1)
    return np.flatnonzero((n0 <= R) != (n1 <= R))


def strungaru_statistic(ac):
    """Mean modulus of the autocorrelation coefficients over nonzero lags."""
    nz = ac.nonzero
    if not np.any(nz):
        return 0.0
    return float(np.mean(np.abs(ac.coefficients[nz])))
