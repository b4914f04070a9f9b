import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from difflab.pointset import (GOLDEN_RATIO, CutProjectScheme, DeformationSpec, InvariantError, Lattice,
                              PointCountCapError, Window, ball_volume, estimate_density, fibonacci_scheme,
                              generate_cut_and_project, generate_deformed_lattice, generate_lattice,
                              generate_visible_points, min_separation, validate)


def brute_lattice_count(basis, R, box=30):
    r = np.arange(-box, box + 1)
    m = np.stack(np.meshgrid(*[r] * basis.shape[0], indexing="ij"), -1).reshape(-1, basis.shape[0])
    x = m @ basis.T
    return int(np.count_nonzero(np.linalg.norm(x, axis=1) <= R + 1e-12))


def test_z2_radius5_has_81_points():
    ps = generate_lattice(Lattice.integer(2), 5)
    assert len(ps) == 81 == brute_lattice_count(np.eye(2), 5)
    assert ps.separation_radius == pytest.approx(1.0)
    assert ps.claimed_density == 1.0


def test_z1_radius10():
    assert len(generate_lattice(Lattice.integer(1), 10)) == 21


def test_rows_sorted_lexicographically():
    pts = generate_lattice(Lattice.integer(2), 6).points
    order = np.lexsort(pts.T[::-1])
    assert np.array_equal(order, np.arange(len(pts)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.6, 1.6), st.floats(-0.5, 0.5), st.floats(0.6, 1.6), st.floats(2.0, 7.0))
def test_lattice_enumeration_matches_brute_force(a, b, c, R):
    basis = np.array([[a, b], [0.0, c]])
    ps = generate_lattice(Lattice(basis), R)
    assert len(ps) == brute_lattice_count(basis, R)
    assert np.all(ps.norms <= R + 1e-9)


def test_point_cap_raises():
    with pytest.raises(PointCountCapError):
        generate_lattice(Lattice.integer(2), 100, cap=1000)


def test_dual_lattice_pairing():
    L = Lattice(np.array([[2.0, 0.3], [0.0, 0.5]]))
    prod = L.basis.T @ L.dual().basis
    assert np.allclose(prod, np.eye(2))


def test_fibonacci_gaps_and_density():
    ps = generate_cut_and_project(fibonacci_scheme(), 100)
    assert len(ps) == 275
    gaps = np.unique(np.round(np.diff(ps.points[:, 0]), 9))
    assert len(gaps) == 2
    assert gaps[1] / gaps[0] == pytest.approx(GOLDEN_RATIO, rel=1e-9)
    # independent oracle: density (1 + phi) / sqrt(1 + phi^2)
    dens = (1 + GOLDEN_RATIO) / math.sqrt(1 + GOLDEN_RATIO ** 2)
    assert ps.claimed_density == pytest.approx(dens, rel=1e-12)
    big = generate_cut_and_project(fibonacci_scheme(), 1e5)
    assert len(big) / 2e5 == pytest.approx(dens, rel=1e-4)


def test_cut_and_project_empty_window():
    s = fibonacci_scheme().with_window(Window.box([0.2], [0.2]))
    assert len(generate_cut_and_project(s, 50)) == 0


def test_cut_and_project_rejects_singular_projection():
    with pytest.raises(InvariantError):
        CutProjectScheme(np.eye(2), np.array([[1.0, 0.0]]), np.array([[2.0, 0.0]]), Window.box([0], [1]))


def test_window_half_open_box():
    w = Window.box([0.0], [1.0])
    assert w.contains(np.array([[0.0]]))[0]
    assert not w.contains(np.array([[1.0]]))[0]


def test_window_fourier_against_quadrature():
    w = Window.box([-0.3], [0.8])
    k = 1.37
    y = np.linspace(-0.3, 0.8, 200_001)
    num = trapezoid(np.exp(2j * np.pi * k * y), y)
    assert abs(w.fourier([[k]])[0] - num) < 1e-9


def test_visible_points_small_radius_brute_force():
    ps = generate_visible_points(2, 2)
    brute = [(a, b) for a in range(-2, 3) for b in range(-2, 3)
             if a * a + b * b <= 4 and math.gcd(a, b) == 1]
    assert len(ps) == len(brute) == 8


def test_visible_points_density_near_inverse_zeta():
    ps = generate_visible_points(2, 300)
    _, dens, _ = estimate_density(ps, [300])
    assert dens[0] == pytest.approx(6 / math.pi ** 2, rel=0.01)


def test_deformed_lattice_keeps_labels_and_density():
    spec = DeformationSpec(np.eye(2), 0.3, 1.0, direction_seed=4)
    ps = generate_deformed_lattice(Lattice.integer(2), spec, 30)
    assert np.allclose(ps.points, spec(ps.labels.astype(float)))
    assert ps.claimed_density == 1.0
    assert np.allclose(spec.limit_map(np.array([1.0, 0.0])), [[-1.0, 0.0]])


def test_deformed_lattice_rejects_collapse():
    spec = DeformationSpec(np.eye(1), 0.5, 1e-3, direction_seed=0)
    with pytest.raises(InvariantError):
        generate_deformed_lattice(Lattice.integer(1), spec, 40)


def test_validate_and_min_separation():
    ps = generate_cut_and_project(fibonacci_scheme(), 200)
    validate(ps)
    assert min_separation(ps.points) == pytest.approx(1 / math.sqrt(1 + GOLDEN_RATIO ** 2), rel=1e-9)


def test_ball_volume():
    assert ball_volume(2, 3) == pytest.approx(9 * math.pi)
    assert ball_volume(3, 1) == pytest.approx(4 * math.pi / 3)
    assert ball_volume(1, 2) == pytest.approx(4)
