"""Random displacement fields attached to point sets.

The displacement of a point is always a deterministic function of the model
seed and the point itself (its coordinates, or its lattice label for
lattice-indexed fields).  Growing the radius therefore extends a realization
instead of resampling it.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import gamma as _gamma, jv
from scipy.spatial import cKDTree
from scipy.stats import norm as _norm

from . import rng
from .pointset import PointSet, CutProjectScheme, generate_cut_and_project


class ConfigurationError(ValueError):
    pass


def _box_muller(u_r, u_t):
    return np.sqrt(-2.0 * np.log(u_r)) * np.cos(2.0 * np.pi * u_t)


def _as_freqs(lam, d):
    lam = np.asarray(lam, dtype=float)
    single = lam.ndim <= 1
    lam = np.atleast_2d(lam.reshape(-1, d) if lam.ndim <= 1 else lam)
    return lam, single


# ---------------------------------------------------------------- distributions

@dataclass(frozen=True)
class Dirac0:
    dim: int = 1
    cf_kind = "analytic"
    n_uniforms = 0

    def sample(self, u):
        return np.zeros((u.shape[0], self.dim))

    def cf(self, lam):
        lam, _ = _as_freqs(lam, self.dim)
        return np.ones(lam.shape[0], dtype=complex)

    @property
    def scale(self):
        return 0.0

    @property
    def support_radius(self):
        return 0.0

    def moment(self, order):
        return 0.0


@dataclass(frozen=True)
class GaussianIso:
    sigma: float
    dim: int = 1
    cf_kind = "analytic"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def n_uniforms(self):
        return 2 * self.dim

    def sample(self, u):
        d = self.dim
        return self.sigma * _box_muller(u[:, :d], u[:, d:2 * d])

    def cf(self, lam):
        lam, _ = _as_freqs(lam, self.dim)
        return np.exp(-2.0 * math.pi ** 2 * self.sigma ** 2 * np.sum(lam ** 2, axis=1)).astype(complex)

    @property
    def scale(self):
        return self.sigma

    support_radius = math.inf

    def moment(self, order):
        """E|xi|^order for the isotropic Gaussian (chi distribution moment)."""
        d = self.dim
        return self.sigma ** order * 2 ** (order / 2) * _gamma((d + order) / 2) / _gamma(d / 2)


@dataclass(frozen=True)
class GaussianMixture:
    weights: tuple
    sigmas: tuple
    means: tuple
    dim: int = 1
    cf_kind = "analytic"

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if len(self.sigmas) != len(w) or np.any(np.asarray(self.sigmas, float) <= 0):
            raise ValueError("one positive sigma per component required")
        m = np.asarray(self.means, float).reshape(len(w), self.dim)
        object.__setattr__(self, "means", tuple(map(tuple, m)))

    @property
    def n_uniforms(self):
        return 1 + 2 * self.dim

    def sample(self, u):
        d = self.dim
        cw = np.cumsum(self.weights)
        comp = np.minimum(np.searchsorted(cw, u[:, 0], side="right"), len(cw) - 1)
        sig = np.asarray(self.sigmas, float)[comp][:, None]
        mu = np.asarray(self.means, float)[comp]
        return mu + sig * _box_muller(u[:, 1:1 + d], u[:, 1 + d:1 + 2 * d])

    def cf(self, lam):
        lam, _ = _as_freqs(lam, self.dim)
        out = np.zeros(lam.shape[0], dtype=complex)
        for w, s, m in zip(self.weights, self.sigmas, self.means):
            out += w * np.exp(-2j * math.pi * lam @ np.asarray(m)) * np.exp(
                -2.0 * math.pi ** 2 * s ** 2 * np.sum(lam ** 2, axis=1))
        return out

    @property
    def scale(self):
        m = np.asarray(self.means, float)
        return float(max(self.sigmas) + np.max(np.linalg.norm(m, axis=1)))

    support_radius = math.inf


@dataclass(frozen=True)
class UniformBox:
    a: float
    dim: int = 1
    cf_kind = "analytic"

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("half-width must be positive")

    @property
    def n_uniforms(self):
        return self.dim

    def sample(self, u):
        return self.a * (2.0 * u[:, :self.dim] - 1.0)

    def cf(self, lam):
        lam, _ = _as_freqs(lam, self.dim)
        return np.prod(np.sinc(2.0 * self.a * lam), axis=1).astype(complex)

    @property
    def scale(self):
        return self.a * math.sqrt(self.dim)

    @property
    def support_radius(self):
        return self.a * math.sqrt(self.dim)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _radial_kernel(d, t):
    """E[exp(-i <t e, theta>)] for theta uniform on the unit sphere of R^d."""
    if d == 1:
        return np.cos(t)
    if d == 3:
        return np.sinc(t / math.pi)
    nu = d / 2.0 - 1.0
    out = np.ones_like(t)
    nz = t > 1e-12
    out[nz] = _gamma(d / 2.0) * (2.0 / t[nz]) ** nu * jv(nu, t[nz])
    return out


@dataclass(frozen=True)
class HeavyTail:
    """Spherically symmetric law with |xi| / scale having density alpha (1+r)^(-alpha-1)."""

    alpha: float
    scale_: float = 1.0
    dim: int = 1
    cf_kind = "numeric"

    def __post_init__(self):
        if not self.alpha > self.dim:
            raise ValueError("heavy-tail exponent must exceed the dimension")
        if not self.scale_ > 0:
            raise ValueError("scale must be positive")

    @property
    def n_uniforms(self):
        return 1 + 2 * self.dim

    def sample(self, u):
        d = self.dim
        r = self.scale_ * ((1.0 - u[:, 0]) ** (-1.0 / self.alpha) - 1.0)
        z = _box_muller(u[:, 1:1 + d], u[:, 1 + d:1 + 2 * d])
        if d == 1:
            return r[:, None] * np.where(z >= 0, 1.0, -1.0)
        return r[:, None] * z / np.linalg.norm(z, axis=1, keepdims=True)

    def _cf_radial(self, omega, tol=1e-10):
        if omega == 0.0:
            return 1.0
        a = self.alpha
        r_cut = tol ** (-1.0 / a) - 1.0
        edges = [0.0]
        period = 2.0 * math.pi / omega
        while edges[-1] < r_cut:
            r0 = edges[-1]
            edges.append(min(r_cut, r0 + min(2.0 * period, 0.25 * (1.0 + r0))))
        e = np.asarray(edges)
        lo, hi = e[:-1, None], e[1:, None]
        x = 0.5 * (hi + lo) + 0.5 * (hi - lo) * _GL_NODES[None, :]
        w = 0.5 * (hi - lo) * _GL_WEIGHTS[None, :]
        f = a * (1.0 + x) ** (-a - 1.0) * _radial_kernel(self.dim, omega * x)
        return float(np.sum(w * f))

    def cf(self, lam):
        lam, _ = _as_freqs(lam, self.dim)
        om = 2.0 * math.pi * self.scale_ * np.linalg.norm(lam, axis=1)
        return np.array([self._cf_radial(o) for o in om], dtype=complex)

    @property
    def scale(self):
        return self.scale_

    support_radius = math.inf

    def moment(self, order):
        if order >= self.alpha:
            return math.inf
        # E[r^s] for density a(1+r)^(-a-1): a B(s+1, a-s)
        s, a = order, self.alpha
        return self.scale_ ** s * a * math.gamma(s + 1) * math.gamma(a - s) / math.gamma(a + 1)


DISTRIBUTIONS = {"dirac0": Dirac0, "gaussian": GaussianIso, "mixture": GaussianMixture,
                 "uniform_box": UniformBox, "heavy_tail": HeavyTail}


def _is_gaussian(dist):
    return isinstance(dist, (GaussianIso, Dirac0))


def _sigma(dist):
    return dist.sigma if isinstance(dist, GaussianIso) else 0.0


# ---------------------------------------------------------------- models

@dataclass(frozen=True, eq=False)
class IID:
    dist: object
    seed: int = 0
    variant = "iid"

    @property
    def dim(self):
        return self.dist.dim


@dataclass(frozen=True, eq=False)
class ShellMixing:
    dist: object
    shell_radii: tuple
    coupling: float = 0.0
    seed: int = 0
    variant = "shell_mixing"

    def __post_init__(self):
        r = np.asarray(self.shell_radii, float)
        if r.ndim != 1 or r.size < 1 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ConfigurationError("shell radii must be positive and increasing")
        ratios = r[1:] / r[:-1]
        if np.any(np.diff(ratios) <= 0):
            raise ConfigurationError("shell radius ratios must be strictly increasing")
        if not 0.0 <= self.coupling < 1.0:
            raise ConfigurationError("coupling must lie in [0, 1)")
        if self.coupling > 0 and not _is_gaussian(self.dist):
            raise ConfigurationError("coupling > 0 needs a Gaussian base law to preserve marginals")
        object.__setattr__(self, "shell_radii", tuple(float(x) for x in r))

    @property
    def dim(self):
        return self.dist.dim


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Stationary Gaussian moving-average field indexed by lattice labels.

    ``kernel="ar"``: separable one-sided AR(1) weights, covariance
    sigma^2 rho^{|k|_1} up to truncation.  ``kernel="gaussian"``: weights
    exp(-2|j|^2/l^2), covariance close to sigma^2 exp(-|k|^2/l^2).
    """

    dist: object
    kernel: str = "ar"
    rho: float = 0.5
    correlation_length: float = 0.0
    seed: int = 0
    tol: float = 1e-6
    variant = "lattice_field"

    def __post_init__(self):
        if not _is_gaussian(self.dist):
            raise ConfigurationError("lattice fields need a Gaussian base law")
        if self.kernel == "ar" and not 0.0 <= self.rho < 1.0:
            raise ConfigurationError("rho must lie in [0, 1)")
        if self.kernel not in ("ar", "gaussian"):
            raise ConfigurationError(f"unknown kernel {self.kernel!r}")

    @property
    def dim(self):
        return self.dist.dim

    def weights(self, n):
        return _ma_weights(self.kernel, n, self.rho, self.correlation_length, self.tol)

    def covariance(self, k, n=None):
        n = len(k) if n is None else n
        off, w = self.weights(n)
        return _sigma(self.dist) ** 2 * _ma_autocov(off, w, np.asarray(k, int))


@dataclass(frozen=True, eq=False)
class StationaryCP:
    scheme: CutProjectScheme
    base: object
    correlation_length: float = 0.0
    seed: int = 0
    variant = "stationary_cp"

    def __post_init__(self):
        if not _is_gaussian(self.base):
            raise ConfigurationError("stationary cut-and-project fields need a Gaussian base law")
        if self.correlation_length < 0:
            raise ConfigurationError("correlation length must be nonnegative")

    @property
    def dist(self):
        return self.base

    @property
    def dim(self):
        return self.scheme.d

    def weights(self):
        return _ma_weights("gaussian", self.scheme.n, 0.0, self.correlation_length, 1e-8)

    def covariance(self, k):
        off, w = self.weights()
        return _sigma(self.base) ** 2 * _ma_autocov(off, w, np.asarray(k, int))


def _ma_weights(kernel, n, rho, ell, tol):
    if kernel == "ar":
        if rho == 0.0:
            return np.zeros((1, n), dtype=np.int64), np.ones(1)
        S = max(0, math.ceil(math.log(tol / n) / (2.0 * math.log(rho))) - 1)
        grids = np.meshgrid(*[np.arange(S + 1)] * n, indexing="ij")
        off = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
        w = rho ** off.sum(axis=1).astype(float)
    else:
        if ell == 0.0:
            return np.zeros((1, n), dtype=np.int64), np.ones(1)
        J = math.ceil(ell * math.sqrt(math.log(1.0 / tol) / 2.0))
        grids = np.meshgrid(*[np.arange(-J, J + 1)] * n, indexing="ij")
        off = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
        r2 = np.sum(off.astype(float) ** 2, axis=1)
        keep = r2 <= J * J
        off = off[keep]
        w = np.exp(-2.0 * r2[keep] / ell ** 2)
    return off, w / math.sqrt(np.sum(w * w))


def _ma_autocov(off, w, k):
    """sum_j w_j w_{j+k} for the moving-average weights."""
    table = {tuple(o): x for o, x in zip(off.tolist(), w)}
    return float(sum(x * table.get(tuple(np.add(o, k).tolist()), 0.0) for o, x in zip(off.tolist(), w)))


def _ma_field(seed, base_labels, off, w, dim, key_fn):
    out = np.zeros((base_labels.shape[0], dim))
    sw = rng.seed_word(seed)
    for o, x in zip(off, w):
        keys = key_fn(base_labels - o)
        out += x * rng.normals(sw, keys, dim)
    return out


@dataclass(frozen=True, eq=False)
class PerturbedPointSet:
    base: PointSet
    displacements: np.ndarray
    model: object
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.displacements.shape != self.base.points.shape:
            raise ValueError("displacements must align with base points")

    @property
    def positions(self):
        return self.base.points + self.displacements

    def __len__(self):
        return len(self.base)


def with_seed(model, seed):
    """Copy of ``model`` with a different seed."""
    import dataclasses
    return dataclasses.replace(model, seed=seed)


def _fresh(ps, dist, seed):
    if isinstance(dist, Dirac0):
        return np.zeros((len(ps), ps.dim))
    u = rng.uniforms(seed, rng.point_keys(ps.points), dist.n_uniforms)
    return dist.sample(u)


def displace(ps, model):
    if model.dim != ps.dim:
        raise ValueError(f"model dimension {model.dim} does not match point set dimension {ps.dim}")
    if isinstance(model, IID):
        return PerturbedPointSet(ps, _fresh(ps, model.dist, model.seed), model)
    if isinstance(model, ShellMixing):
        return shell_mixing_field(ps, model)
    if isinstance(model, LatticeField):
        return lattice_field(ps, model)
    if isinstance(model, StationaryCP):
        raise ConfigurationError("stationary cut-and-project fields are built by stationary_cp_field")
    raise TypeError(f"unknown model {model!r}")


def shell_index(norms, shell_radii):
    """Shell number k >= 1 with R_{k-1} < |p| <= R_k (R_0 = 0)."""
    return np.searchsorted(np.asarray(shell_radii), norms, side="left") + 1


def shell_mixing_field(ps, model):
    radii = np.asarray(model.shell_radii)
    if radii[-1] < ps.generation_radius:
        raise ConfigurationError("outermost shell must cover the generation radius")
    fresh = _fresh(ps, model.dist, model.seed)
    disp = fresh.copy()
    shells = shell_index(ps.norms, radii)
    anchors = np.full(len(ps), -1, dtype=np.int64)
    c = model.coupling
    for k in range(3, len(radii) + 1, 2):
        members = np.flatnonzero(shells == k)
        prev = np.flatnonzero(shells == k - 1)
        if members.size == 0 or prev.size == 0:
            continue
        anchors[members] = _nearest_lex(ps.points[prev], ps.points[members], prev)
        if c > 0:
            disp[members] = math.sqrt(1.0 - c * c) * fresh[members] + c * fresh[anchors[members]]
    return PerturbedPointSet(ps, disp, model, {"anchors": anchors, "shells": shells})


def _nearest_lex(cand, query, cand_index):
    # cand rows are in lexicographic order (PointSet rows are sorted), so the
    # smallest index among equidistant candidates is the lexicographic minimum
    tree = cKDTree(cand)
    kk = min(8, cand.shape[0])
    dist, idx = tree.query(query, k=kk)
    dist = np.atleast_2d(dist.reshape(query.shape[0], kk))
    idx = np.atleast_2d(idx.reshape(query.shape[0], kk))
    tie = dist <= dist[:, :1] * (1 + 1e-12) + 1e-15
    best = np.where(tie, idx, np.iinfo(np.int64).max).min(axis=1)
    return cand_index[best]


def lattice_field(ps, model):
    if ps.labels is None:
        raise ConfigurationError("lattice fields need a point set with lattice labels")
    if isinstance(model.dist, Dirac0):
        return PerturbedPointSet(ps, np.zeros((len(ps), ps.dim)), model)
    off, w = model.weights(ps.labels.shape[1])
    seed = rng.salted(model.seed, "lattice_field")
    disp = model.dist.sigma * _ma_field(seed, ps.labels, off, w, ps.dim, rng.integer_keys)
    return PerturbedPointSet(ps, disp, model)


def fundamental_domain_shift(scheme, seed):
    u = rng.uniforms(rng.salted(seed, "eta"), np.zeros(1, dtype=np.uint64), scheme.n)[0]
    return scheme.lattice_basis @ u


def stationary_cp_field(scheme, base, correlation_length, seed, R, eta=None):
    """Perturbed cut-and-project set built from an L-stationary Gaussian field.

    The window is shifted by the internal part of the random vector eta and
    every accepted lattice point q is moved by  xi'_q + pi_phys(eta).
    ``eta`` may be given explicitly (e.g. zero) to switch the shift off.
    """
    model = StationaryCP(scheme, base, correlation_length, seed)
    eta = fundamental_domain_shift(scheme, seed) if eta is None else np.asarray(eta, float)
    eta_phys = scheme.proj_phys @ eta
    eta_int = scheme.proj_int @ eta
    ps = generate_cut_and_project(scheme.with_window(scheme.window.shifted(-eta_int)), R)
    d = scheme.d
    if isinstance(base, Dirac0) or len(ps) == 0:
        xi = np.zeros((len(ps), d))
    elif correlation_length == 0.0:
        xi = _fresh(ps, base, seed)
    else:
        off, w = model.weights()
        xi = base.sigma * _ma_field(seed, ps.labels, off, w, d,
                                    lambda m: rng.point_keys(scheme.physical(m)))
    return PerturbedPointSet(ps, xi + eta_phys, model, {"eta": eta})


# ---------------------------------------------------------------- analytics

def characteristic_function(model, lam):
    """E exp(-2 pi i <xi, lam>) of the one-point displacement law."""
    dist = getattr(model, "dist", model)
    lam = np.asarray(lam, float)
    vals = dist.cf(lam)
    if lam.ndim <= 1:
        return complex(vals[0])
    return vals


def cf_kind(model):
    return getattr(model, "dist", model).cf_kind


@dataclass
class MomentEstimate:
    order: float
    estimate: float
    std_error: float
    n: np.ndarray
    trace: np.ndarray
    diverging: bool


def verify_moment(model, eps, n_samples, seed=None):
    """Monte Carlo estimate of E|xi|^(d+eps) with standard error and a running trace."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    dist = getattr(model, "dist", model)
    d = dist.dim
    order = d + eps
    seed = getattr(model, "seed", 0) if seed is None else seed
    keys = np.arange(n_samples, dtype=np.uint64)
    if isinstance(dist, Dirac0):
        x = np.zeros((n_samples, d))
    else:
        x = dist.sample(rng.uniforms(rng.salted(seed, "moment"), keys, dist.n_uniforms))
    v = np.linalg.norm(x, axis=1) ** order
    ns = np.array([n_samples // 64, n_samples // 16, n_samples // 4, n_samples])
    csum = np.cumsum(v)
    trace = csum[ns - 1] / ns
    est = float(trace[-1])
    se = float(np.std(v, ddof=1) / math.sqrt(n_samples))
    diverging = isinstance(dist, HeavyTail) and dist.alpha <= order
    return MomentEstimate(order, est, se, ns, trace, diverging)


@dataclass
class CovarianceTrace:
    N: np.ndarray
    inner_sums: np.ndarray
    increments: np.ndarray
    partial_sums: np.ndarray
    significant_pairs: np.ndarray
    threshold_z: float
    n_seeds: int


def covariance_condition_estimate(model, ps, N_max, n_seeds=500, alpha=0.01):
    """Partial sums of  sum_N N^-2 sum_{p != q in B_N} |Cov(Y_p, Y_q)|,
    Y_p = |xi_p| 1{|xi_p| <= |p|}, with covariances estimated over seeds.

    Estimated covariances are hard-thresholded at a Bonferroni z-level so
    that pure sampling noise does not accumulate over the ~N^4 pairs.
    """
    if N_max > ps.generation_radius:
        raise ValueError("N_max exceeds the generation radius")
    if n_seeds < 500:
        raise ValueError("at least 500 seeds are needed")
    sub = ps.restrict(N_max)
    norms = sub.norms
    P = len(sub)
    Y = np.empty((n_seeds, P))
    for s in range(n_seeds):
        disp = displace(sub, with_seed(model, _seed_stream(model.seed, s))).displacements
        r = np.linalg.norm(disp, axis=1)
        Y[s] = np.where(r <= norms, r, 0.0)
    Yc = Y - Y.mean(axis=0)
    var = np.sum(Yc * Yc, axis=0) / (n_seeds - 1)
    n_pairs = max(1, P * (P - 1))
    z = float(_norm.isf(alpha / (2.0 * n_pairs)))
    bins = np.ceil(norms).astype(np.int64)
    nb = int(N_max) + 1
    inner = np.zeros(nb)
    count = np.zeros(nb, dtype=np.int64)
    block = 512
    for i0 in range(0, P, block):
        i1 = min(P, i0 + block)
        C = Yc[:, i0:i1].T @ Yc / (n_seeds - 1)
        se = np.sqrt(np.outer(var[i0:i1], var) / n_seeds)
        sig = np.abs(C) > z * se
        sig[np.arange(i1 - i0), np.arange(i0, i1)] = False
        pb = np.maximum(bins[i0:i1, None], bins[None, :])
        inner += np.bincount(pb[sig], weights=np.abs(C[sig]), minlength=nb)[:nb]
        count += np.bincount(pb[sig], minlength=nb)[:nb]
    Ns = np.arange(1, nb)
    inner_cum = np.cumsum(inner)[1:]
    incr = inner_cum / Ns.astype(float) ** 2
    return CovarianceTrace(Ns, inner_cum, incr, np.cumsum(incr), np.cumsum(count)[1:], z, n_seeds)


def _seed_stream(seed, k):
    """Deterministic per-realization seed derived from a base seed."""
    return int(rng.salted(seed, f"realization:{k}"))
