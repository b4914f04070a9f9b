"""Numerical harnesses for the strong-law and Hellinger-density statements.

Correlated sequences are generated from counter-based normals indexed by
position, so a sequence of length n is a prefix of every longer one.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import fft, signal, special
from scipy.spatial import cKDTree

from . import rng
from .perturb import ConfigurationError, with_seed, displace, _seed_stream
from .pointset import ball_volume
from .spectral import mu_lambda_weights

CHECKPOINTS = (10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6)


# ---------------------------------------------------------------- scalar marginals

@dataclass(frozen=True)
class ScalarMarginal:
    """One-dimensional law given by its quantile function."""
    name: str
    params: tuple = ()

    @property
    def mean(self):
        p = self.params
        if self.name == "uniform":
            return 0.5
        if self.name == "gaussian":
            return 0.0
        if self.name == "exponential":
            return 1.0 / p[0] if p else 1.0
        if self.name == "pareto":
            alpha = p[0]
            xm = p[1] if len(p) > 1 else 1.0
            return math.inf if alpha <= 1 else alpha * xm / (alpha - 1)
        if self.name == "constant":
            return float(p[0])
        raise ConfigurationError(f"unknown marginal {self.name}")

    @property
    def positive(self):
        if self.name == "constant":
            return self.params[0] > 0
        return self.name in ("exponential", "pareto")

    @property
    def bounded(self):
        return self.name in ("uniform", "constant")

    def quantile(self, u):
        p = self.params
        if self.name == "uniform":
            return u
        if self.name == "gaussian":
            return special.ndtri(u)
        if self.name == "exponential":
            return -np.log1p(-u) / (p[0] if p else 1.0)
        if self.name == "pareto":
            xm = p[1] if len(p) > 1 else 1.0
            return xm * (1.0 - u) ** (-1.0 / p[0])
        if self.name == "constant":
            return np.full_like(u, float(p[0]))
        raise ConfigurationError(f"unknown marginal {self.name}")


@dataclass(frozen=True)
class CorrelatedSequenceSpec:
    """kind: "iid", "geometric" (Gaussian AR(1) copula) or "custom" (Gaussian, given autocovariance)."""
    kind: str
    marginal: ScalarMarginal
    beta: float = 0.0
    length_cap: int = 10 ** 7
    covariance: object = None

    def __post_init__(self):
        if self.kind not in ("iid", "geometric", "custom"):
            raise ConfigurationError(f"unknown sequence kind {self.kind}")
        if self.kind == "geometric" and not 0.0 < self.beta < 1.0:
            raise ConfigurationError("beta must lie in (0, 1)")
        if self.kind == "custom" and (self.covariance is None or self.marginal.name != "gaussian"):
            raise ConfigurationError("custom sequences need a covariance callback and a Gaussian marginal")
        if not math.isfinite(self.marginal.mean):
            raise ConfigurationError("marginal must have a finite mean")


def _gaussians(seed, n, salt):
    keys = rng.integer_keys(np.arange(n, dtype=np.int64))
    return rng.normals(rng.salted(seed, salt), keys, 1)[:, 0]


def sample_sequence(spec, n, seed):
    if n > spec.length_cap:
        raise ValueError(f"n={n} exceeds the length cap {spec.length_cap}")
    if spec.marginal.name == "constant":
        return np.full(n, float(spec.marginal.params[0]))
    if spec.kind == "iid":
        keys = rng.integer_keys(np.arange(n, dtype=np.int64))
        u = rng.uniforms(rng.salted(seed, "sequence"), keys, 1)[:, 0]
        return spec.marginal.quantile(u)
    if spec.kind == "geometric":
        z = _gaussians(seed, n, "sequence")
        b = spec.beta
        # stationary start: x_0 = z_0, x_k = b x_{k-1} + sqrt(1-b^2) z_k
        x = np.empty(n)
        x[0] = z[0]
        x[1:] = signal.lfilter([math.sqrt(1 - b * b)], [1.0, -b], z[1:], zi=[b * z[0]])[0]
        return spec.marginal.quantile(special.ndtr(x)) if spec.marginal.name != "gaussian" else x
    return _circulant_gaussian(spec.covariance, n, seed)


def _circulant_gaussian(cov, n, seed):
    m = 1 << int(math.ceil(math.log2(2 * n)))
    lags = np.arange(m // 2 + 1)
    c = np.array([cov(int(k)) for k in lags], float)
    row = np.concatenate([c, c[-2:0:-1]])
    ev = fft.rfft(row).real
    if np.min(ev) < -1e-8 * ev.max():
        raise ConfigurationError("covariance is not embeddable (negative circulant eigenvalue)")
    ev = np.clip(ev, 0, None)
    z = _gaussians(seed, 2 * m, "circulant")
    w = z[:m] + 1j * z[m:]
    spec_ = fft.fft(np.sqrt(np.concatenate([ev, ev[-2:0:-1]]) / m) * w)
    return spec_.real[:n]


@dataclass
class Trace:
    n: np.ndarray
    value: np.ndarray


def _checkpoints(n_max):
    pts = [c for c in CHECKPOINTS if c <= n_max]
    if not pts or pts[-1] != n_max:
        pts.append(int(n_max))
    return np.array(pts, dtype=np.int64)


def slln_trace(spec, n_max=10 ** 6, seed=0):
    """(1/n) sum_{k<=n} (X_k - E X_k) at n = 10^3, 10^4, ... up to n_max."""
    x = sample_sequence(spec, int(n_max), seed) - spec.marginal.mean
    if spec.marginal.name == "constant":
        x = np.zeros(int(n_max))
    s = np.cumsum(x)
    n = _checkpoints(n_max)
    return Trace(n, s[n - 1] / n)


def truncated_slln_trace(spec, n_max=10 ** 6, seed=0):
    """S_n / n for a positive sequence; ``value_truncated`` uses Y_i = X_i 1{X_i <= i}.

    The truncated sums are the device that carries the almost-sure limit;
    both traces share the same limit E X_1.
    """
    if not spec.marginal.positive:
        raise ConfigurationError("the truncated strong law needs a positive marginal")
    x = sample_sequence(spec, int(n_max), seed)
    idx = np.arange(1, x.size + 1)
    y = np.where(x <= idx, x, 0.0)
    n = _checkpoints(n_max)
    tr = Trace(n, np.cumsum(x)[n - 1] / n)
    tr.value_truncated = np.cumsum(y)[n - 1] / n
    return tr


# ---------------------------------------------------------------- gridded measures

@dataclass(frozen=True, eq=False)
class GriddedMeasure:
    origin: np.ndarray
    step: np.ndarray
    densities: np.ndarray

    def __post_init__(self):
        dens = np.asarray(self.densities, float)
        d = dens.ndim
        object.__setattr__(self, "origin", np.broadcast_to(np.asarray(self.origin, float), (d,)).copy())
        object.__setattr__(self, "step", np.broadcast_to(np.asarray(self.step, float), (d,)).copy())
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ValueError("densities must be finite and nonnegative")
        object.__setattr__(self, "densities", dens)

    @property
    def cell_volume(self):
        return float(np.prod(self.step))

    @property
    def mass(self):
        return float(self.densities.sum() * self.cell_volume)

    def integrate(self, f):
        return float(np.sum(self.densities * np.asarray(f, float)) * self.cell_volume)

    def centers(self, axis):
        return self.origin[axis] + self.step[axis] * (np.arange(self.densities.shape[axis]) + 0.5)

    def same_grid(self, other):
        return (self.densities.shape == other.densities.shape
                and np.array_equal(self.origin, other.origin) and np.array_equal(self.step, other.step))


def hellinger_density(g1, g2):
    """Cellwise geometric mean sqrt(g1 * g2); zero wherever either density vanishes."""
    if not g1.same_grid(g2):
        raise ValueError("measures live on different grids")
    return GriddedMeasure(g1.origin, g1.step, np.sqrt(g1.densities * g2.densities))


def hellinger_cs_bound(g1, g2, f):
    """(<rho, f>, sqrt(g1(f)) sqrt(g2(f))) for a nonnegative grid function f."""
    f = np.asarray(f, float)
    if np.any(f < 0):
        raise ValueError("test function must be nonnegative")
    lhs = hellinger_density(g1, g2).integrate(f)
    rhs = math.sqrt(g1.integrate(f)) * math.sqrt(g2.integrate(f))
    if lhs > rhs * (1 + 1e-12) + 1e-300:
        raise AssertionError(f"Cauchy-Schwarz violated: {lhs} > {rhs}")
    return lhs, rhs


# ---------------------------------------------------------------- diffraction bound

@dataclass(frozen=True)
class GaussianBump:
    """f(k) = exp(-pi |k - c|^2 / s^2); its transform is s^d exp(-pi s^2 |x|^2) e(-<x, c>)."""
    center: tuple
    width: float

    def f(self, k):
        c = np.asarray(self.center, float)
        return np.exp(-np.pi * np.sum((k - c) ** 2, axis=-1) / self.width ** 2)

    def fhat(self, x):
        c = np.asarray(self.center, float)
        d = c.size
        r2 = np.sum(x * x, axis=-1)
        return self.width ** d * np.exp(-np.pi * self.width ** 2 * r2) * np.exp(-2j * np.pi * (x @ c))

    def space_radius(self, tol=1e-12):
        d = len(self.center)
        return math.sqrt(max(math.log(self.width ** d / tol), 0.0) / math.pi) / self.width

    def freq_radius(self, tol=1e-12):
        return self.width * math.sqrt(math.log(1.0 / tol) / math.pi)


def _pair_form(points, mu, nu, bump, radii):
    """|(1/Vol) sum_{p,q in B_R} mu(p) conj(nu(q)) fhat(p - q)| for each R."""
    r = bump.space_radius()
    rmax = max(radii)
    keep = np.einsum("ij,ij->i", points, points) <= rmax * rmax
    pts, mu, nu = points[keep], mu[keep], nu[keep]
    norms = np.sqrt(np.einsum("ij,ij->i", pts, pts))
    pairs = cKDTree(pts).query_pairs(r, output_type="ndarray")
    a, b = pairs[:, 0], pairs[:, 1]
    fh = bump.fhat(pts[a] - pts[b])
    terms = mu[a] * np.conj(nu[b]) * fh + mu[b] * np.conj(nu[a]) * np.conj(fh)
    diag = mu * np.conj(nu) * bump.fhat(np.zeros((1, pts.shape[1])))[0]
    pmax = np.maximum(norms[a], norms[b])
    out = []
    for R in radii:
        s = terms[pmax <= R].sum() + diag[norms <= R].sum()
        out.append(abs(s) / ball_volume(pts.shape[1], R))
    return np.array(out)


def _frequency_grid(bump, step):
    c = np.asarray(bump.center, float)
    half = bump.freq_radius()
    n = int(math.ceil(2 * half / step))
    origin = c - n * step / 2
    axes = [origin[j] + step * (np.arange(n) + 0.5) for j in range(c.size)]
    return origin, axes


def _grid_sums(points, weights, axes):
    """M(k) = sum_p w_p e(-<p, k>) on the tensor grid of ``axes`` (d = 1 or 2)."""
    d = points.shape[1]
    E = []
    for j in range(d):
        t = np.multiply.outer(points[:, j], axes[j])
        t -= np.round(t)
        E.append(np.exp(-2j * np.pi * t))
    if d == 1:
        return weights @ E[0]
    if d == 2:
        return E[0].T @ (weights[:, None] * E[1])
    raise ValueError("grid sums are implemented for d <= 2")


@dataclass
class DiffractionBound:
    radii: np.ndarray
    lhs: np.ndarray
    lhs_grid: float
    rhs: float
    rhs_se: float
    rhs_replicates: np.ndarray

    @property
    def tail_max(self):
        k = (len(self.lhs) + 1) // 2
        return float(np.max(self.lhs[-k:]))

    @property
    def holds(self):
        return self.tail_max <= self.rhs + 3 * self.rhs_se


def hellinger_diffraction_bound(pps, lam, bump, R_schedule, step=None, n_replicates=4):
    """Finite-R check of |<mu-nu cross term, fhat>| <= <rho(gamma_mu, gamma_nu), f>.

    The left side is a pair sum over points in B_R for each R of the
    schedule.  The right side tests the Hellinger density of the two gridded
    periodograms at the largest R against f; its standard error comes from
    re-drawing the displacements ``n_replicates`` times.
    """
    radii = np.asarray(R_schedule, float)
    Rmax = float(radii[-1])
    lam = np.asarray(lam, float)
    step = step if step is not None else 1.0 / (2.0 * Rmax)
    origin, axes = _frequency_grid(bump, step)
    kk = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    fgrid = bump.f(kk)
    vol = ball_volume(pps.base.dim, Rmax)
    inside = pps.base.norms <= Rmax
    pts = pps.base.points

    def rhs_of(p):
        mx, mxi = mu_lambda_weights(p, lam)
        Mmu = _grid_sums(pts[inside], mxi.weights[inside], axes)
        g_mu = GriddedMeasure(origin, step, np.abs(Mmu) ** 2 / vol)
        return g_mu, Mmu, mx, mxi

    g_mu, Mmu, mx, mxi = rhs_of(pps)
    Mnu = _grid_sums(pts[inside], mx.weights[inside], axes)
    g_nu = GriddedMeasure(origin, step, np.abs(Mnu) ** 2 / vol)
    rhs = hellinger_density(g_mu, g_nu).integrate(fgrid)
    cell = step ** pps.base.dim
    lhs_grid = abs(np.sum(fgrid * Mmu * np.conj(Mnu)) * cell / vol)
    lhs = _pair_form(pts, mxi.weights, mx.weights, bump, radii)
    reps = []
    for k in range(n_replicates):
        alt = displace(pps.base, with_seed(pps.model, _seed_stream(pps.model.seed, 1000 + k)))
        reps.append(hellinger_density(rhs_of(alt)[0], g_nu).integrate(fgrid))
    reps = np.array(reps + [rhs])
    se = float(reps.std(ddof=1) / math.sqrt(reps.size)) if reps.size > 1 else 0.0
    return DiffractionBound(radii, lhs, float(lhs_grid), float(rhs), se, reps)
