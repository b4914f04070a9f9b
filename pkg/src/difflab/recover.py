"""Deconvolution of perturbed spectra and the structure-factor relation."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json

import numpy as np

from .perturb import (ConfigurationError, IID, Dirac0, characteristic_function, displace, with_seed,
                      _seed_stream)
from .pointset import ball_volume
from .spectral import Spectrum, FrequencySet, exp_sums, periodogram, default_threads, _freq_array

DEFAULT_TAU = 0.05


def _check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise ConfigurationError(f"cloaking threshold must lie in (0, 1), got {tau}")


def _phi(model, lam):
    return np.atleast_1d(characteristic_function(model, np.atleast_2d(lam)))


@dataclass
class RecoveryRecord:
    frequency: np.ndarray
    measured: complex
    phi: complex
    recovered: complex = None
    reference: complex = None
    abs_error: float = None
    cloaked: bool = False

    def as_dict(self):
        def c(z):
            return None if z is None else [float(np.real(z)), float(np.imag(z))]
        return {"lambda": [float(x) for x in self.frequency], "measured": c(self.measured),
                "phi": c(self.phi), "recovered": c(self.recovered), "reference": c(self.reference),
                "abs_error": None if self.abs_error is None else float(self.abs_error),
                "cloaked": bool(self.cloaked)}


@dataclass
class RecoveryReport:
    records: list
    metadata: dict = field(default_factory=dict)

    @property
    def recovered(self):
        return np.array([np.nan if r.cloaked else r.recovered for r in self.records], dtype=complex)

    @property
    def cloaked(self):
        return np.array([r.cloaked for r in self.records])

    def to_json(self):
        return json.dumps({"metadata": self.metadata, "records": [r.as_dict() for r in self.records]},
                          indent=2, sort_keys=True)


def recover_spectrum(measured, model, tau=DEFAULT_TAU, reference=None, metadata=None):
    """Divide measured Fourier coefficients by the displacement characteristic function.

    Frequencies with |phi| < tau are flagged as cloaked and left unrecovered.
    """
    _check_tau(tau)
    if isinstance(measured, Spectrum):
        lam, vals, R = measured.frequencies, measured.values, measured.R
    else:
        measured = list(measured)
        lam = np.array([m.frequency for m in measured], float)
        vals = np.array([m.value for m in measured], complex)
        R = measured[0].R if measured else None
    phi = _phi(model, lam) if lam.shape[0] else np.zeros(0, complex)
    ref = None if reference is None else np.asarray(
        reference.values if isinstance(reference, Spectrum) else reference, complex)
    records = []
    for j in range(lam.shape[0]):
        rec = RecoveryRecord(lam[j], complex(vals[j]), complex(phi[j]))
        if abs(phi[j]) < tau:
            rec.cloaked = True
        else:
            rec.recovered = complex(vals[j] / phi[j])
            if ref is not None:
                rec.reference = complex(ref[j])
                rec.abs_error = abs(rec.recovered - rec.reference)
        records.append(rec)
    meta = {"R": R, "seed": getattr(model, "seed", None), "model": describe_model(model), "tau": tau}
    meta.update(metadata or {})
    return RecoveryReport(records, meta)


def describe_model(model):
    dist = getattr(model, "dist", model)
    out = {"variant": getattr(model, "variant", "law"), "law": type(dist).__name__}
    for k, v in vars(dist).items():
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def detect_cloaking(model, freqs, tau=DEFAULT_TAU):
    """Frequencies where |phi| < tau."""
    _check_tau(tau)
    lam = _freq_array(freqs)
    if lam.shape[0] == 0:
        return lam
    return lam[np.abs(_phi(model, lam)) < tau]


# ---------------------------------------------------------------- structure factor

@dataclass
class StructureFactorEstimate:
    frequencies: np.ndarray
    S: np.ndarray
    std_error: np.ndarray
    n_realizations: int
    R: float
    n_points: int
    normalization: str = "per point: |sum|^2 / #(X in B_R)"


def _exclude_zero(lam):
    if np.any(np.all(np.abs(lam) < 1e-14, axis=1)):
        raise ValueError("lambda = 0 is excluded from structure-factor grids")


def structure_factor(base, model, freqs, R, n_realizations=50, seed=0, membership="unperturbed",
                     threads=None):
    """Average over realizations of |sum_p e(-<p + xi_p, lam>)|^2 / #(X in B_R).

    With ``model=None`` the unperturbed set is evaluated once.  Realization k
    uses a seed derived deterministically from ``seed`` and k.
    """
    lam = _freq_array(freqs)
    _exclude_zero(lam)
    if R > base.generation_radius * (1 + 1e-12):
        raise ValueError("R exceeds the generation radius")
    inside = base.norms <= R
    n_pts = int(np.count_nonzero(inside))
    if model is None or isinstance(getattr(model, "dist", None), Dirac0):
        s = exp_sums(base.points[inside], lam, threads=threads)
        S = (s.real ** 2 + s.imag ** 2) / n_pts
        return StructureFactorEstimate(lam, S, np.zeros_like(S), 1, float(R), n_pts)
    if n_realizations < 10:
        raise ValueError("n_realizations must be at least 10")
    threads = default_threads() if threads is None else threads

    def one(k):
        pps = displace(base, with_seed(model, _seed_stream(seed, k)))
        pos = pps.positions
        if membership == "unperturbed":
            pos = pos[inside]
        else:
            pos = pos[np.einsum("ij,ij->i", pos, pos) <= R * R]
        s = exp_sums(pos, lam, threads=1)
        return (s.real ** 2 + s.imag ** 2) / n_pts

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, range(n_realizations)))
    else:
        rows = [one(k) for k in range(n_realizations)]
    rows = np.array(rows)
    return StructureFactorEstimate(lam, rows.mean(axis=0), rows.std(axis=0, ddof=1) / np.sqrt(n_realizations),
                                   n_realizations, float(R), n_pts)


@dataclass
class RelationResidual:
    frequencies: np.ndarray
    residual: np.ndarray
    std_error: np.ndarray
    relative: np.ndarray

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.residual)))

    @property
    def mean_abs(self):
        return float(np.mean(np.abs(self.residual)))

    @property
    def mean_se(self):
        return float(np.mean(self.std_error))


def verify_structure_relation(S_base, S_pert, model):
    """(S_pert - 1) - |phi|^2 (S_base - 1) per frequency, with combined standard errors."""
    if (S_base.frequencies.shape != S_pert.frequencies.shape
            or not np.allclose(S_base.frequencies, S_pert.frequencies, rtol=0, atol=1e-12)):
        raise ValueError("structure factors are on different frequency sets")
    if S_base.R != S_pert.R:
        raise ValueError("structure factors use different radii")
    if not isinstance(model, IID):
        raise ConfigurationError("the structure-factor relation is stated for independent displacements")
    p2 = np.abs(_phi(model, S_base.frequencies)) ** 2
    left = S_pert.S - 1.0
    right = p2 * (S_base.S - 1.0)
    res = left - right
    se = np.sqrt(S_pert.std_error ** 2 + (p2 * S_base.std_error) ** 2)
    scale = np.maximum(np.abs(right), 1e-300)
    return RelationResidual(S_base.frequencies, res, se, np.abs(res) / scale)


def verify_diffraction_relation(pps, freqs, R, smoothing=None):
    """Single-realization residual of the diffraction relation at each frequency.

    left  = P_R(X_xi)(lam) - dens,  right = |phi(lam)|^2 (P_R(X)(lam) - dens),
    where P_R is the periodogram.  ``smoothing=(half_width, n)`` replaces each
    periodogram value by its mean over an n^d grid spanning
    lam +- half_width, which tames the O(1) pointwise fluctuations.
    """
    if not isinstance(pps.model, IID):
        raise ConfigurationError("the diffraction relation is stated for independent displacements")
    lam = _freq_array(freqs)
    d = lam.shape[1]
    dens = pps.base.claimed_density
    phi2 = np.abs(_phi(pps.model, lam)) ** 2
    if smoothing is None:
        offs = np.zeros((1, d))
    else:
        hw, n = smoothing
        ax = np.linspace(-hw, hw, int(n))
        offs = np.stack([g.ravel() for g in np.meshgrid(*[ax] * d, indexing="ij")], axis=1)
    grid = (lam[:, None, :] + offs[None, :, :]).reshape(-1, d)
    p_pert = periodogram(pps, grid, R).values.real.reshape(lam.shape[0], -1).mean(axis=1)
    p_base = periodogram(pps.base, grid, R).values.real.reshape(lam.shape[0], -1).mean(axis=1)
    left = p_pert - dens
    right = phi2 * (p_base - dens)
    res = left - right
    return RelationResidual(lam, res, np.zeros_like(res), np.abs(res) / np.maximum(np.abs(right), 1e-300))
