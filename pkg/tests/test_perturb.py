import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from difflab.perturb import (ConfigurationError, Dirac0, GaussianIso, GaussianMixture, HeavyTail, IID,
                             LatticeField, ShellMixing, UniformBox, characteristic_function,
                             covariance_condition_estimate, displace, stationary_cp_field, verify_moment,
                             with_seed)
from difflab.pointset import Lattice, fibonacci_scheme, generate_cut_and_project, generate_lattice


def empirical_cf(xi, lam):
    return np.mean(np.exp(-2j * np.pi * xi @ np.asarray(lam, float)))


@pytest.mark.parametrize("dist,lam", [
    (GaussianIso(0.3, 2), [0.8, -0.5]),
    (UniformBox(0.4, 2), [0.9, 0.3]),
    (GaussianMixture((0.3, 0.7), (0.1, 0.2), ((0.2,), (-0.1,)), 1), [1.3]),
    (HeavyTail(3.0, 0.2, 2), [0.7, 0.2]),
])
def test_characteristic_function_matches_samples(z2_small, dist, lam):
    pts = generate_lattice(Lattice.integer(dist.dim), 200 if dist.dim == 2 else 60_000)
    xi = displace(pts, IID(dist, seed=5)).displacements
    n = len(xi)
    assert abs(characteristic_function(IID(dist), lam) - empirical_cf(xi, lam)) < 5 / math.sqrt(n)


def test_gaussian_cf_closed_form():
    lam = np.array([1.0, 0.0])
    assert characteristic_function(IID(GaussianIso(0.1, 2)), lam) == pytest.approx(math.exp(-2 * math.pi ** 2 * 0.01))


def test_uniform_box_has_a_spectral_zero():
    assert abs(characteristic_function(IID(UniformBox(0.5, 1)), [1.0])) < 1e-15


def _heavy_tail_oracle(alpha, s, lam, d):
    om = 2 * math.pi * s * abs(lam)
    dens = lambda r: alpha * (1 + r) ** (-alpha - 1)
    if d == 1:
        return integrate.quad(dens, 0, np.inf, weight="cos", wvar=om)[0]
    edges = np.concatenate([np.arange(0, 4000, 2.0)])
    return sum(integrate.quad(lambda r: dens(r) * special.j0(om * r), a, a + 2.0)[0] for a in edges)


@pytest.mark.parametrize("alpha,s,lam,d", [(2.5, 0.3, 0.9, 1), (3.0, 0.2, 1.1, 2)])
def test_heavy_tail_cf_against_quadrature(alpha, s, lam, d):
    dist = HeavyTail(alpha, s, d)
    lv = [lam] + [0.0] * (d - 1)
    assert characteristic_function(IID(dist), lv).real == pytest.approx(_heavy_tail_oracle(alpha, s, lam, d), abs=1e-7)


def test_dirac_displacements_are_zero(z2_small):
    pps = displace(z2_small, IID(Dirac0(2)))
    assert not np.any(pps.displacements)
    assert np.array_equal(pps.positions, z2_small.points)


def test_displacement_determinism_and_locality(z2_small, gauss01):
    a = displace(z2_small, gauss01)
    sub = z2_small.restrict(10)
    b = displace(sub, gauss01)
    mask = z2_small.norms <= 10
    assert np.array_equal(a.displacements[mask], b.displacements)
    c = displace(z2_small, with_seed(gauss01, 2))
    assert not np.array_equal(a.displacements, c.displacements)


def test_gaussian_mean_norm(z2_150, gauss01):
    xi = displace(z2_150, gauss01).displacements
    r = np.linalg.norm(xi, axis=1)
    assert r.mean() == pytest.approx(0.1 * math.sqrt(math.pi / 2), abs=4 * r.std() / math.sqrt(len(r)))


def test_dimension_mismatch(z2_small):
    with pytest.raises(ValueError):
        displace(z2_small, IID(GaussianIso(0.1, 1)))


def test_shell_mixing_validation():
    with pytest.raises(ConfigurationError):
        ShellMixing(GaussianIso(0.1, 2), (1, 2, 4), 0.5)  # ratios 2, 2 not increasing
    with pytest.raises(ConfigurationError):
        ShellMixing(UniformBox(0.1, 2), (1, 3, 20), 0.5)


def test_shell_mixing_preserves_marginal_and_couples_anchor():
    ps = generate_lattice(Lattice.integer(2), 25)
    model = ShellMixing(GaussianIso(0.1, 2), (1, 3, 20, 400), 0.5, seed=0)
    samples = []
    for s in range(400):
        pps = displace(ps, with_seed(model, s))
        samples.append(pps.displacements)
    anchors = pps.info["anchors"]
    X = np.array(samples)
    child = np.flatnonzero(anchors >= 0)[0]
    x, y = X[:, child, 0], X[:, anchors[child], 0]
    assert np.std(x) == pytest.approx(0.1, rel=0.1)
    assert np.corrcoef(x, y)[0, 1] == pytest.approx(0.5, abs=0.12)


def test_lattice_field_covariance():
    ps = generate_lattice(Lattice.integer(2), 150)
    model = LatticeField(GaussianIso(0.1, 2), "ar", 0.5, seed=3)
    xi = displace(ps, model).displacements
    lab = ps.labels
    idx = {tuple(l): i for i, l in enumerate(map(tuple, lab))}
    pairs = [(i, idx[(l[0] + 1, l[1])]) for i, l in enumerate(map(tuple, lab)) if (l[0] + 1, l[1]) in idx]
    a, b = np.array(pairs).T
    emp = np.mean(xi[a, 0] * xi[b, 0])
    assert emp == pytest.approx(float(model.covariance(np.array([1, 0]))), abs=0.0006)
    assert np.var(xi[:, 0]) == pytest.approx(0.01, rel=0.05)


def test_stationary_cp_zero_length_matches_iid():
    scheme = fibonacci_scheme()
    pps = stationary_cp_field(scheme, GaussianIso(0.05, 1), 0.0, 4, 200, eta=np.zeros(2))
    ref = displace(generate_cut_and_project(scheme, 200), IID(GaussianIso(0.05, 1), 4))
    assert np.array_equal(pps.displacements, ref.displacements)


def test_verify_moment_gaussian():
    est = verify_moment(IID(GaussianIso(1.0, 2)), 0.0, 100_000, seed=1)
    assert est.estimate == pytest.approx(2.0, abs=4 * est.std_error)
    assert not est.diverging


def test_verify_moment_flags_divergence():
    est = verify_moment(IID(HeavyTail(2.5, 1.0, 2)), 0.5, 10_000)
    assert est.diverging


def test_covariance_condition_iid_has_no_signal():
    ps = generate_lattice(Lattice.integer(2), 6)
    tr = covariance_condition_estimate(IID(GaussianIso(0.1, 2), 1), ps, 6, 500)
    assert tr.partial_sums[-1] < 0.05
    assert np.all(np.diff(tr.partial_sums) >= 0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(-3, 3), st.floats(-3, 3))
def test_cf_modulus_at_most_one(sigma, l1, l2):
    for dist in (GaussianIso(sigma, 2), UniformBox(sigma, 2)):
        assert abs(characteristic_function(IID(dist), [l1, l2])) <= 1 + 1e-12
