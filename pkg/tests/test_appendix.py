import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from difflab.appendix import (CorrelatedSequenceSpec, GaussianBump, GriddedMeasure, ScalarMarginal,
                              _frequency_grid, _grid_sums, _pair_form, hellinger_cs_bound, hellinger_density,
                              hellinger_diffraction_bound, sample_sequence, slln_trace, truncated_slln_trace)
from difflab.perturb import ConfigurationError, Dirac0, GaussianIso, IID, displace
from difflab.pointset import Lattice, generate_lattice


def test_constant_sequence_trace_is_zero():
    tr = slln_trace(CorrelatedSequenceSpec("iid", ScalarMarginal("constant", (3.0,))), 10 ** 4)
    assert tr.n.tolist() == [1000, 10000]
    assert np.all(tr.value == 0)


def test_iid_uniform_average():
    tr = slln_trace(CorrelatedSequenceSpec("iid", ScalarMarginal("uniform")), 10 ** 6, seed=0)
    assert tr.n[-1] == 10 ** 6
    assert abs(tr.value[-1]) <= 0.005


def test_geometric_gaussian_average():
    tr = slln_trace(CorrelatedSequenceSpec("geometric", ScalarMarginal("gaussian"), 0.5), 10 ** 6, seed=0)
    assert abs(tr.value[-1]) <= 0.01


def test_geometric_lag_one_correlation():
    x = sample_sequence(CorrelatedSequenceSpec("geometric", ScalarMarginal("gaussian"), 0.7), 200_000, 3)
    assert np.var(x) == pytest.approx(1.0, abs=0.03)
    assert np.corrcoef(x[:-1], x[1:])[0, 1] == pytest.approx(0.7, abs=0.01)


def test_custom_covariance_sequence():
    spec = CorrelatedSequenceSpec("custom", ScalarMarginal("gaussian"), covariance=lambda k: 1.0 / (1 + k) ** 2)
    x = sample_sequence(spec, 200_000, 1)
    assert np.var(x) == pytest.approx(1.0, abs=0.03)
    assert np.mean(x[:-1] * x[1:]) == pytest.approx(0.25, abs=0.02)


def test_non_embeddable_covariance():
    spec = CorrelatedSequenceSpec("custom", ScalarMarginal("gaussian"), covariance=lambda k: [1.0, 0.9, -0.9][k] if k < 3 else 0.0)
    with pytest.raises(ConfigurationError):
        sample_sequence(spec, 100, 0)


def test_truncated_constant():
    c = 2.5
    tr = truncated_slln_trace(CorrelatedSequenceSpec("iid", ScalarMarginal("constant", (c,))), 10 ** 4)
    assert np.all(tr.value == c)
    assert tr.value_truncated[-1] == pytest.approx(c, abs=1e-3)


def test_truncated_exponential():
    tr = truncated_slln_trace(CorrelatedSequenceSpec("iid", ScalarMarginal("exponential", (1.0,))), 10 ** 6, 0)
    assert tr.value[-1] == pytest.approx(1.0, abs=0.01)
    assert tr.value_truncated[-1] == pytest.approx(1.0, abs=0.01)


def test_truncated_pareto_seed0():
    m = ScalarMarginal("pareto", (1.5, 1.0))
    tr = truncated_slln_trace(CorrelatedSequenceSpec("iid", m), 10 ** 6, 0)
    assert abs(tr.value[-1] - m.mean) <= 0.05


@pytest.mark.parametrize("make", [
    lambda: CorrelatedSequenceSpec("geometric", ScalarMarginal("uniform"), 1.0),
    lambda: CorrelatedSequenceSpec("geometric", ScalarMarginal("uniform"), 0.0),
    lambda: CorrelatedSequenceSpec("iid", ScalarMarginal("pareto", (1.0,))),
    lambda: CorrelatedSequenceSpec("custom", ScalarMarginal("uniform"), covariance=lambda k: 0.0),
    lambda: truncated_slln_trace(CorrelatedSequenceSpec("iid", ScalarMarginal("gaussian")), 1000),
])
def test_sequence_errors(make):
    with pytest.raises(ConfigurationError):
        make()


def test_length_cap():
    spec = CorrelatedSequenceSpec("iid", ScalarMarginal("uniform"), length_cap=100)
    with pytest.raises(ValueError):
        sample_sequence(spec, 101, 0)


@pytest.mark.xfail(strict=True, reason="about 83 of 100 seeds give a stepwise-decreasing trace for the "
                                       "geometric uniform sequence; the last decade is noise-dominated")
def test_slln_traces_mostly_monotone():
    spec = CorrelatedSequenceSpec("geometric", ScalarMarginal("uniform"), 0.5)
    good = 0
    for s in range(100):
        v = np.abs(slln_trace(spec, 10 ** 6, s).value)
        good += bool(np.all(np.diff(v) <= 0))
    assert good >= 90


# ---------------------------------------------------------------- Hellinger

def grid(d):
    return GriddedMeasure((0.0, 0.0), (0.5, 0.25), d)


def test_hellinger_of_proportional_densities():
    g2 = np.arange(12.0).reshape(3, 4)
    rho = hellinger_density(grid(2 * g2), grid(g2))
    assert np.allclose(rho.densities, math.sqrt(2) * g2)


def test_hellinger_identity_and_disjoint_support():
    g = np.array([[0.0, 1.0], [4.0, 9.0]])
    assert np.array_equal(hellinger_density(grid(g), grid(g)).densities, g)
    h = np.array([[1.0, 0.0], [0.0, 0.0]])
    assert not hellinger_density(grid(g), grid(h)).densities.any()


def test_hellinger_grid_mismatch_and_negative_density():
    with pytest.raises(ValueError):
        hellinger_density(grid(np.ones((2, 2))), GriddedMeasure((0.0, 0.0), (1.0, 1.0), np.ones((2, 2))))
    with pytest.raises(ValueError):
        grid(-np.ones((2, 2)))


dens = arrays(float, (4, 5), elements=st.floats(0, 1e3))


@settings(max_examples=60, deadline=None)
@given(dens, dens, dens)
def test_hellinger_bounds(a, b, f):
    g1, g2 = grid(a), grid(b)
    rho = hellinger_density(g1, g2).densities
    assert np.all(rho <= np.maximum(a, b) * (1 + 1e-12))
    lhs, rhs = hellinger_cs_bound(g1, g2, f)
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


# ---------------------------------------------------------------- diffraction bound

@pytest.fixture(scope="module")
def z1():
    return generate_lattice(Lattice.integer(1), 400)


def test_bump_transform_pair():
    b = GaussianBump((0.3,), 0.5)
    x = np.array([[0.7]])
    k = np.linspace(-8, 8, 20001)
    num = np.trapezoid(b.f(k[:, None]) * np.exp(-2j * np.pi * k * 0.7), k)
    assert b.fhat(x)[0] == pytest.approx(num, abs=1e-10)


def test_dirac_left_side_vanishes(z1):
    pps = displace(z1, IID(Dirac0(1)))
    db = hellinger_diffraction_bound(pps, [0.3], GaussianBump((0.25,), 0.2), [100, 200, 300], n_replicates=2)
    assert np.all(db.lhs == 0)


def test_equality_when_measures_coincide(z1):
    pps = displace(z1, IID(GaussianIso(0.2, 1), seed=5))
    w = np.exp(-2j * np.pi * pps.displacements[:, 0] * 0.3) - 0.5
    bump = GaussianBump((0.25,), 0.2)
    R = 300
    pair = _pair_form(z1.points, w, w, bump, [R])[0]
    step = 1 / (8 * R)
    origin, axes = _frequency_grid(bump, step)
    inside = z1.norms <= R
    M = _grid_sums(z1.points[inside], w[inside], axes)
    integral = np.sum(bump.f(axes[0][:, None]) * np.abs(M) ** 2) * step / (2 * R)
    assert pair == pytest.approx(integral, rel=0.05)


def test_bound_holds_for_gaussian_perturbation(z1):
    pps = displace(z1, IID(GaussianIso(0.2, 1), seed=2))
    db = hellinger_diffraction_bound(pps, [0.3], GaussianBump((0.25,), 0.2), [100, 200, 300], n_replicates=3)
    assert db.lhs.shape == (3,)
    assert db.rhs_replicates.size == 4
    assert db.holds
