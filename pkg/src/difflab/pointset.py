"""Deterministic point configurations: lattices, cut-and-project sets,
visible lattice points and asymptotically affine deformations of lattices.

All generators return a :class:`PointSet` whose rows are sorted
lexicographically, so output never depends on enumeration order.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gamma as _gamma, zeta as _zeta

from . import rng

DEFAULT_POINT_CAP = 10_000_000
EXACT_CHECK_LIMIT = 100_000


class PointCountCapError(RuntimeError):
    """Raised when a generator would produce more points than the configured cap."""


class InvariantError(ValueError):
    pass


def ball_volume(d, R):
    """Lebesgue volume of the Euclidean ball of radius R in R^d."""
    return math.pi ** (d / 2.0) / _gamma(d / 2.0 + 1.0) * float(R) ** d


def _lexsort_rows(a):
    if a.shape[0] == 0:
        return np.arange(0)
    return np.lexsort(a.T[::-1])


@dataclass(frozen=True, eq=False)
class PointSet:
    dim: int
    points: np.ndarray
    separation_radius: float
    generation_radius: float
    claimed_density: float = None
    descriptor: dict = field(default_factory=dict)
    # integer lattice coordinates of each point, when the generator has them
    labels: np.ndarray = None

    def __len__(self):
        return self.points.shape[0]

    @property
    def norms(self):
        return np.sqrt(np.einsum("ij,ij->i", self.points, self.points))

    def restrict(self, R):
        """Sub-configuration inside the closed ball of radius R."""
        mask = self.norms <= R
        labels = None if self.labels is None else self.labels[mask]
        return PointSet(self.dim, self.points[mask], self.separation_radius, min(R, self.generation_radius),
                        self.claimed_density, dict(self.descriptor), labels)


@dataclass(frozen=True, eq=False)
class Lattice:
    """Lattice generated by the *columns* of ``basis``."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if b.shape[0] != b.shape[1]:
            raise ValueError("lattice basis must be square")
        if abs(np.linalg.det(b)) < 1e-300 or np.linalg.matrix_rank(b) < b.shape[0]:
            raise ValueError("lattice basis is singular")
        object.__setattr__(self, "basis", b)

    @classmethod
    def integer(cls, d):
        return cls(np.eye(d))

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def covolume(self):
        return abs(float(np.linalg.det(self.basis)))

    def dual(self):
        return Lattice(np.linalg.inv(self.basis).T)


@dataclass(frozen=True, eq=False)
class Window:
    """Acceptance region in internal space: half-open box ``[lower, upper)`` or open ball."""

    kind: str
    lower: np.ndarray = None
    upper: np.ndarray = None
    center: np.ndarray = None
    radius: float = None

    @classmethod
    def box(cls, lower, upper):
        return cls("box", lower=np.atleast_1d(np.asarray(lower, float)), upper=np.atleast_1d(np.asarray(upper, float)))

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=np.atleast_1d(np.asarray(center, float)), radius=float(radius))

    @property
    def dim(self):
        return (self.lower if self.kind == "box" else self.center).shape[0]

    @property
    def volume(self):
        if self.kind == "box":
            return float(np.prod(np.clip(self.upper - self.lower, 0.0, None)))
        return ball_volume(self.dim, self.radius)

    def bounds(self):
        if self.kind == "box":
            return self.lower, self.upper
        return self.center - self.radius, self.center + self.radius

    def contains(self, y):
        y = np.atleast_2d(y)
        if self.kind == "box":
            return np.all((y >= self.lower) & (y < self.upper), axis=1)
        return np.sum((y - self.center) ** 2, axis=1) < self.radius ** 2

    def shifted(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        if self.kind == "box":
            return Window.box(self.lower + t, self.upper + t)
        return Window.ball(self.center + t, self.radius)

    def fourier(self, k):
        """Return  integral over W of exp(2 pi i <k, y>) dy  for each row of k."""
        k = np.atleast_2d(np.asarray(k, float))
        if self.kind == "box":
            out = np.ones(k.shape[0], dtype=complex)
            for j in range(self.dim):
                a, b = self.lower[j], self.upper[j]
                w = b - a
                mid = 0.5 * (a + b)
                out *= w * np.sinc(k[:, j] * w) * np.exp(2j * np.pi * k[:, j] * mid)
            return out
        if self.dim == 1:
            r = self.radius
            return 2 * r * np.sinc(2 * r * k[:, 0]) * np.exp(2j * np.pi * k[:, 0] * self.center[0])
        raise NotImplementedError("Fourier transform only for box windows and 1-d balls")


@dataclass(frozen=True, eq=False)
class CutProjectScheme:
    lattice_basis: np.ndarray
    proj_phys: np.ndarray
    proj_int: np.ndarray
    window: Window
    name: str = "cut_and_project"

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.lattice_basis, float))
        P = np.atleast_2d(np.asarray(self.proj_phys, float))
        Q = np.atleast_2d(np.asarray(self.proj_int, float))
        n = B.shape[0]
        if B.shape != (n, n) or P.shape[1] != n or Q.shape[1] != n or P.shape[0] + Q.shape[0] != n:
            raise InvariantError("inconsistent cut-and-project dimensions")
        S = np.vstack([P, Q])
        if np.linalg.matrix_rank(S) < n or abs(np.linalg.det(S)) < 1e-12:
            raise InvariantError("stacked projections are singular")
        if np.linalg.matrix_rank(B) < n:
            raise InvariantError("lattice basis is singular")
        if self.window.dim != Q.shape[0]:
            raise InvariantError("window dimension does not match internal space")
        object.__setattr__(self, "lattice_basis", B)
        object.__setattr__(self, "proj_phys", P)
        object.__setattr__(self, "proj_int", Q)

    @property
    def n(self):
        return self.lattice_basis.shape[0]

    @property
    def d(self):
        return self.proj_phys.shape[0]

    @property
    def k(self):
        return self.proj_int.shape[0]

    @property
    def phys_matrix(self):
        return self.proj_phys @ self.lattice_basis

    @property
    def int_matrix(self):
        return self.proj_int @ self.lattice_basis

    def physical(self, m):
        """Physical projections of lattice points with integer coordinates ``m``."""
        return np.atleast_2d(m).astype(float) @ self.phys_matrix.T

    def internal(self, m):
        return np.atleast_2d(m).astype(float) @ self.int_matrix.T

    @property
    def density(self):
        """Weyl-equidistribution density  Vol(W) / covolume of the stacked lattice."""
        return self.window.volume / abs(float(np.linalg.det(np.vstack([self.phys_matrix, self.int_matrix]))))

    def with_window(self, window):
        return CutProjectScheme(self.lattice_basis, self.proj_phys, self.proj_int, window, self.name)


GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


def fibonacci_scheme():
    """Z^2 cut along the line of slope 1/phi; window is the internal image of the unit square."""
    nrm = math.sqrt(1.0 + GOLDEN_RATIO ** 2)
    P = np.array([[GOLDEN_RATIO, 1.0]]) / nrm
    Q = np.array([[-1.0, GOLDEN_RATIO]]) / nrm
    corners = Q @ np.array([[0.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 1.0]])
    W = Window.box([corners.min()], [corners.max()])
    return CutProjectScheme(np.eye(2), P, Q, W, name="fibonacci")


@dataclass(frozen=True, eq=False)
class DeformationSpec:
    """psi(x) = A x + c (1+|x|)^(-beta) u(x), u a seeded unit-vector field."""

    linear_part: np.ndarray
    decay_amplitude: float = 0.0
    decay_exponent: float = 1.0
    direction_seed: int = 0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.linear_part, float))
        if A.shape[0] != A.shape[1] or abs(np.linalg.det(A)) < 1e-300:
            raise ValueError("linear part must be a nonsingular square matrix")
        if not self.decay_exponent > 0:
            raise ValueError("decay exponent must be positive")
        object.__setattr__(self, "linear_part", A)

    def directions(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        d = x.shape[1]
        z = rng.normals(rng.salted(self.direction_seed, "deformation"), rng.point_keys(x), d)
        if d == 1:
            return np.where(z >= 0, 1.0, -1.0)
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        r = np.linalg.norm(x, axis=1, keepdims=True)
        out = x @ self.linear_part.T
        if self.decay_amplitude != 0.0:
            out = out + self.decay_amplitude * (1.0 + r) ** (-self.decay_exponent) * self.directions(x)
        return out

    def limit_map(self, k):
        """F(k) = -A k, the limit of psi(x) - psi(x + k)."""
        return -(np.atleast_2d(k) @ self.linear_part.T)


def enumerate_parallelepiped(A, lower, upper, cap=DEFAULT_POINT_CAP, origin=None, tol=1e-9):
    """Integer vectors m with ``lower <= A m <= upper`` (up to ``tol`` slack).

    One coordinate is solved exactly per prefix of the remaining ones, so the
    work is proportional to the number of prefixes rather than the volume of
    the bounding box.  Callers apply their exact membership test afterwards.
    """
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    lo = np.asarray(lower, float)
    hi = np.asarray(upper, float)
    if np.any(hi < lo):
        return np.zeros((0, n), dtype=np.int64)
    s = np.zeros(n, dtype=np.int64) if origin is None else np.asarray(origin, dtype=np.int64)
    shift = A @ s
    lo = lo - shift
    hi = hi - shift
    Ainv = np.linalg.inv(A)
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    mc = Ainv @ c
    mh = np.abs(Ainv) @ h
    mlo = np.floor(mc - mh - tol).astype(np.int64)
    mhi = np.ceil(mc + mh + tol).astype(np.int64)
    ranges = mhi - mlo + 1
    if n == 1:
        j = 0
    else:
        j = int(np.argmax(ranges))
    others = [i for i in range(n) if i != j]
    n_prefix = int(np.prod(ranges[others])) if others else 1
    if n_prefix > cap:
        raise PointCountCapError(f"enumeration needs {n_prefix} prefixes, cap is {cap}")
    if others:
        grids = np.meshgrid(*[np.arange(mlo[i], mhi[i] + 1) for i in others], indexing="ij")
        prefix = np.stack([g.ravel() for g in grids], axis=1)
        partial = prefix.astype(float) @ A[:, others].T
    else:
        prefix = np.zeros((1, 0), dtype=np.int64)
        partial = np.zeros((1, n))
    col = A[:, j]
    t_lo = np.full(prefix.shape[0], float(mlo[j]))
    t_hi = np.full(prefix.shape[0], float(mhi[j]))
    keep = np.ones(prefix.shape[0], dtype=bool)
    for i in range(n):
        a = col[i]
        if abs(a) < 1e-15:
            keep &= (partial[:, i] >= lo[i] - tol) & (partial[:, i] <= hi[i] + tol)
            continue
        b1 = (lo[i] - partial[:, i]) / a
        b2 = (hi[i] - partial[:, i]) / a
        t_lo = np.maximum(t_lo, np.minimum(b1, b2))
        t_hi = np.minimum(t_hi, np.maximum(b1, b2))
    first = np.ceil(t_lo - tol).astype(np.int64)
    last = np.floor(t_hi + tol).astype(np.int64)
    counts = np.where(keep, np.clip(last - first + 1, 0, None), 0)
    total = int(counts.sum())
    if total > cap:
        raise PointCountCapError(f"enumeration would produce {total} points, cap is {cap}")
    rows = np.repeat(np.arange(prefix.shape[0]), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    m = np.empty((total, n), dtype=np.int64)
    m[:, others] = prefix[rows]
    m[:, j] = first[rows] + offs
    return m + s


def _lattice_ball_labels(basis, R, cap):
    d = basis.shape[0]
    return enumerate_parallelepiped(basis, -R * np.ones(d), R * np.ones(d), cap=cap)


def shortest_vector_length(lattice):
    B = lattice.basis
    r = float(np.min(np.linalg.norm(B, axis=0)))
    m = _lattice_ball_labels(B, r * (1 + 1e-9), DEFAULT_POINT_CAP)
    v = m.astype(float) @ B.T
    nrm = np.linalg.norm(v, axis=1)
    return float(nrm[nrm > 0].min())


def _within(points, R):
    return np.einsum("ij,ij->i", points, points) <= R * R


def _sorted(points, labels):
    order = _lexsort_rows(points)
    return points[order], (None if labels is None else labels[order])


def validate(ps, sample_size=EXACT_CHECK_LIMIT, seed=0):
    """Check the PointSet invariants; raise :class:`InvariantError` on failure."""
    if len(ps) == 0:
        return
    if np.any(ps.norms > ps.generation_radius * (1 + 1e-12)):
        raise InvariantError("point outside the generation ball")
    if len(ps) < 2:
        return
    tree = cKDTree(ps.points)
    if len(ps) <= sample_size:
        q = ps.points
    else:
        idx = np.sort(np.argsort(rng.uniforms(seed, np.arange(len(ps), dtype=np.uint64), 1)[:, 0])[:sample_size])
        q = ps.points[idx]
    dist, _ = tree.query(q, k=2)
    if dist[:, 1].min() == 0.0:
        raise InvariantError("duplicate points")
    if dist[:, 1].min() < ps.separation_radius * (1 - 1e-12):
        raise InvariantError(f"separation {dist[:, 1].min()} below claimed {ps.separation_radius}")


def min_separation(ps):
    """Exact minimum pairwise distance (nearest-neighbour query on a k-d tree)."""
    pts = ps.points if isinstance(ps, PointSet) else np.atleast_2d(ps)
    if pts.shape[0] < 2:
        raise ValueError("min_separation needs at least two points")
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(dist[:, 1].min())


def generate_lattice(lattice, R, cap=DEFAULT_POINT_CAP):
    if not R > 0:
        raise ValueError("R must be positive")
    d = lattice.dim
    expected = ball_volume(d, R) / lattice.covolume
    if expected > cap:
        raise PointCountCapError(f"about {expected:.3g} lattice points requested, cap is {cap}")
    m = _lattice_ball_labels(lattice.basis, R, cap)
    pts = m.astype(float) @ lattice.basis.T
    keep = _within(pts, R)
    pts, m = _sorted(pts[keep], m[keep])
    ps = PointSet(d, pts, shortest_vector_length(lattice), float(R), 1.0 / lattice.covolume,
                  {"generator": "lattice", "basis": lattice.basis.tolist()}, m)
    validate(ps)
    return ps


def generate_cut_and_project(scheme, R, cap=DEFAULT_POINT_CAP, origin=None):
    if not R > 0:
        raise ValueError("R must be positive")
    d, k = scheme.d, scheme.k
    desc = {"generator": scheme.name, "lattice_basis": scheme.lattice_basis.tolist(),
            "proj_phys": scheme.proj_phys.tolist(), "proj_int": scheme.proj_int.tolist(),
            "window": _window_desc(scheme.window), "density": "analytic"}
    if scheme.window.volume <= 0.0:
        return PointSet(d, np.zeros((0, d)), math.inf, float(R), 0.0, desc, np.zeros((0, scheme.n), np.int64))
    expected = ball_volume(d, R) * scheme.density
    if expected > cap:
        raise PointCountCapError(f"about {expected:.3g} points requested, cap is {cap}")
    wlo, whi = scheme.window.bounds()
    A = np.vstack([scheme.phys_matrix, scheme.int_matrix])
    lower = np.concatenate([-R * np.ones(d), wlo])
    upper = np.concatenate([R * np.ones(d), whi])
    m = enumerate_parallelepiped(A, lower, upper, cap=cap, origin=origin)
    phys = scheme.physical(m)
    keep = _within(phys, R) & scheme.window.contains(scheme.internal(m))
    phys, m = _sorted(phys[keep], m[keep])
    sep = math.inf
    if phys.shape[0] >= 2:
        sep = min_separation(phys)
        if sep < 1e-9:
            raise InvariantError("physical projection is not injective on the generated sample")
    ps = PointSet(d, phys, sep, float(R), scheme.density, desc, m)
    return ps


def _window_desc(w):
    if w.kind == "box":
        return {"kind": "box", "lower": w.lower.tolist(), "upper": w.upper.tolist()}
    return {"kind": "ball", "center": w.center.tolist(), "radius": w.radius}


def generate_visible_points(d, R, cap=DEFAULT_POINT_CAP):
    if d < 2:
        raise ValueError("visible points need d >= 2")
    if R < 1:
        raise ValueError("R must be at least 1")
    base = generate_lattice(Lattice.integer(d), R, cap=cap)
    g = np.gcd.reduce(np.abs(base.labels), axis=1)
    keep = g == 1
    ps = PointSet(d, base.points[keep], 1.0, float(R), float(1.0 / _zeta(d)),
                  {"generator": "visible", "d": d}, base.labels[keep])
    validate(ps)
    return ps


def generate_deformed_lattice(lattice, spec, R, cap=DEFAULT_POINT_CAP):
    """Image psi(L) inside B_R; ``labels`` keep the pairing x <-> psi(x)."""
    d = lattice.dim
    A = spec.linear_part
    if A.shape[0] != d:
        raise ValueError("deformation dimension does not match lattice")
    # |psi(x)| <= R forces |A x| <= R + |c|
    reach = (R + abs(spec.decay_amplitude)) * np.linalg.norm(np.linalg.inv(A), 2) * (1 + 1e-12)
    m = _lattice_ball_labels(lattice.basis, reach, cap)
    x = m.astype(float) @ lattice.basis.T
    inside = _within(x, reach)
    x, m = x[inside], m[inside]
    y = spec(x)
    keep = _within(y, R)
    y, m = _sorted(y[keep], m[keep])
    lat_min = shortest_vector_length(lattice)
    sep = min_separation(y) if y.shape[0] >= 2 else math.inf
    if sep < 1e-3 * lat_min:
        raise InvariantError(f"deformation breaks uniform discreteness (min gap {sep:.3g})")
    desc = {"generator": "deformed_lattice", "basis": lattice.basis.tolist(), "linear_part": A.tolist(),
            "decay_amplitude": spec.decay_amplitude, "decay_exponent": spec.decay_exponent,
            "direction_seed": spec.direction_seed}
    dens = 1.0 / (lattice.covolume * abs(np.linalg.det(A)))
    return PointSet(d, y, sep, float(R), dens, desc, m)


def estimate_density(ps, radii):
    """Density trace  #(X in B_R) / Vol(B_R)  and, if a density is claimed,
    the discrepancy  |#(X in B_R) - dens Vol(B_R)| / R^d."""
    radii = np.atleast_1d(np.asarray(radii, float))
    if radii.size == 0:
        raise ValueError("radii must be nonempty")
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be increasing")
    if radii[-1] > ps.generation_radius * (1 + 1e-12):
        raise ValueError("radius exceeds generation radius")
    norms = np.sort(ps.norms)
    counts = np.searchsorted(norms, radii, side="right")
    vol = np.array([ball_volume(ps.dim, r) for r in radii])
    dens = counts / vol
    disc = None
    if ps.claimed_density is not None:
        disc = np.abs(counts - ps.claimed_density * vol) / radii ** ps.dim
    return radii, dens, disc
