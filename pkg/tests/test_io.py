import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from difflab import io
from difflab.appendix import GriddedMeasure
from difflab.pointset import PointSet, fibonacci_scheme, generate_cut_and_project
from difflab.spectral import Spectrum


def test_pointset_round_trip(tmp_path):
    ps = generate_cut_and_project(fibonacci_scheme(), 50)
    path = io.write_pointset(tmp_path / "p.csv", ps)
    back = io.read_pointset(path)
    assert np.array_equal(back.points, ps.points)
    assert back.claimed_density == ps.claimed_density
    assert path.read_text().splitlines()[0] == "x1"


def test_perturbed_files(tmp_path, pps_150):
    base, disp = io.write_perturbed(tmp_path / "seed1", pps_150)
    assert base.name == "seed1_base.csv"
    assert np.array_equal(io.read_displacements(disp), pps_150.displacements)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=25, deadline=None)
@given(arrays(float, (5, 2), elements=finite), arrays(float, 5, elements=finite), arrays(float, 5, elements=finite))
def test_spectrum_round_trip_bit_exact(tmp_path_factory, lam, re, im):
    path = tmp_path_factory.mktemp("s") / "s.csv"
    sp = Spectrum(lam, re + 1j * im, 12.5, "FourierSum")
    io.write_spectrum(path, sp)
    l2, v2, R, kind = io.read_spectrum(path)
    assert np.array_equal(l2, lam) and np.array_equal(v2.real, re) and np.array_equal(v2.imag, im)
    assert (R, kind) == (12.5, "FourierSum")
    assert path.read_text().splitlines()[0] == "lambda_1,lambda_2,re,im,R,kind"


def test_empty_spectrum(tmp_path):
    io.write_spectrum(tmp_path / "e.csv", Spectrum(np.zeros((0, 2)), np.zeros(0, complex), 3.0, "FourierSum"))
    lam, vals, R, kind = io.read_spectrum(tmp_path / "e.csv")
    assert lam.shape == (0, 2) and R is None


def test_trace_round_trip(tmp_path):
    n = np.array([1000, 10000, 100000])
    v = np.array([0.1, 1 / 3, np.pi])
    io.write_trace(tmp_path / "t.csv", n, v)
    n2, v2 = io.read_trace(tmp_path / "t.csv")
    assert np.array_equal(n2, n) and np.array_equal(v2, v)
    assert (tmp_path / "t.csv").read_text().splitlines()[1] == "1000,0.10000000000000001"


def test_grid_and_json(tmp_path):
    gm = GriddedMeasure((0.0, 0.0), (1.0, 1.0), np.array([[1.0, 2.0], [3.0, 4.0]]))
    lines = io.write_grid(tmp_path / "g.csv", gm).read_text().splitlines()
    assert lines[0] == "cell_index_1,cell_index_2,density"
    assert lines[3] == "1,0,3"
    p = io.write_json(tmp_path / "j.json", {"b": np.float64(1.5), "a": np.arange(2), "c": 1 + 2j})
    assert p.read_text().index('"a"') < p.read_text().index('"b"')
    assert "[\n    1.0,\n    2.0\n  ]" in p.read_text()
