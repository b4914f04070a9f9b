import numpy as np
from hypothesis import given, settings, strategies as st

from difflab import rng


def test_uniforms_open_interval_and_shape():
    u = rng.uniforms(3, rng.integer_keys(np.arange(10_000)), 4)
    assert u.shape == (10_000, 4)
    assert np.all((u > 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 0.01


def test_normals_moments():
    z = rng.normals(11, rng.integer_keys(np.arange(200_000)), 1)[:, 0]
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01


def test_negative_zero_folds_onto_zero():
    a = rng.point_keys(np.array([[0.0, 1.5]]))
    b = rng.point_keys(np.array([[-0.0, 1.5]]))
    assert a[0] == b[0]


def test_seed_changes_stream():
    k = rng.integer_keys(np.arange(100))
    assert not np.array_equal(rng.uniforms(1, k, 1), rng.uniforms(2, k, 1))


def test_salted_streams_differ():
    assert rng.salted(5, "a") != rng.salted(5, "b")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=2, max_size=40, unique=True),
       st.randoms(use_true_random=False))
def test_draws_do_not_depend_on_order(pts, rnd):
    pts = np.array(pts)
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    u = rng.uniforms(9, rng.point_keys(pts), 3)
    v = rng.uniforms(9, rng.point_keys(pts[perm]), 3)
    assert np.array_equal(u[perm], v)
