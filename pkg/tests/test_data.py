import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dcsolve.core import SolverConfig, UsageError
from dcsolve.data import (
    TRACE_HEADER,
    PgmParseError,
    estimation_error,
    gen_equicorr_design,
    gen_mixture_samples,
    gen_regression,
    hemisphere,
    load_pgm,
    read_dataset_csv,
    read_trace_csv,
    render_sfs,
    rng_for,
    write_csv,
    write_dataset_csv,
    write_pgm,
)
from dcsolve.problems import SfsInstance, make_sfs, make_toy
from dcsolve.solvers import frank_wolfe_dc, lmo_box, subgradient_dc


def test_design_identity_covariance():
    X = gen_equicorr_design(100_000, 2, 0.0, seed=1)
    assert np.all(np.abs(np.cov(X, rowvar=False) - np.eye(2)) < 0.02)


def test_design_correlation():
    X = gen_equicorr_design(100_000, 2, 0.7, seed=2)
    assert abs(np.corrcoef(X, rowvar=False)[0, 1] - 0.7) < 0.02


def test_design_deterministic_and_validated():
    assert np.array_equal(gen_equicorr_design(5, 3, 0.7, 9), gen_equicorr_design(5, 3, 0.7, 9))
    assert not np.array_equal(gen_equicorr_design(5, 3, 0.7, 9), gen_equicorr_design(5, 3, 0.7, 10))
    for rho in (-0.1, 1.0):
        with pytest.raises(UsageError):
            gen_equicorr_design(5, 3, rho, 0)


def test_streams_are_independent_of_creation_order():
    a = rng_for(7, 3).standard_normal(4)
    rng_for(7, 1).standard_normal(100)
    assert np.array_equal(rng_for(7, 3).standard_normal(4), a)
    assert not np.array_equal(rng_for(7, 4).standard_normal(4), a)
    with pytest.raises(UsageError):
        rng_for(-1)


def test_regression_noiseless_and_support():
    ds = gen_regression(30, 12, 0.5, 4, noise_sd=0.0, seed=3)
    assert np.array_equal(ds.y, ds.X @ ds.xstar)
    assert np.count_nonzero(ds.xstar) == 4
    assert set(np.unique(ds.xstar)) <= {0.0, 1.0}
    with pytest.raises(UsageError):
        gen_regression(30, 12, 0.5, 13)


@settings(max_examples=25)
@given(st.integers(1, 40), st.integers(0, 2**63))
def test_support_size_always_exact(p, seed):
    s = p // 2
    ds = gen_regression(5, p, 0.7, s, seed=seed)
    assert np.count_nonzero(ds.xstar) == s


def test_regression_paper_regime_shape():
    ds = gen_regression(190, 300, 0.7, 10, seed=0)
    assert ds.X.shape == (190, 300) and ds.y.shape == (190,)
    assert np.count_nonzero(ds.xstar) == 10


def test_mixture_samples():
    n = 4000
    y = gen_mixture_samples(n, 1.0, 2.0, 0.5, -3.0, 1.0, seed=1)
    assert abs(y.mean() - 2.0) <= 4 * 0.5 / math.sqrt(n)
    y = gen_mixture_samples(n, 0.0, 2.0, 0.5, -3.0, 1.0, seed=1)
    assert abs(y.mean() + 3.0) <= 4 * 1.0 / math.sqrt(n)
    assert np.array_equal(gen_mixture_samples(9, 0.3, 0, 1, 1, 1, seed=5),
                          gen_mixture_samples(9, 0.3, 0, 1, 1, 1, seed=5))
    with pytest.raises(UsageError):
        gen_mixture_samples(3, 1.5, 0, 1, 0, 1)


def test_render_flat_and_plane():
    assert np.array_equal(render_sfs(np.zeros((3, 4))), np.ones((3, 4)))
    # z = x: the cell normal is proportional to (-1, 0, 1)
    z = np.tile(np.arange(5.0), (3, 1))
    l1, l3 = 0.3, 0.9
    img = render_sfs(z, (l1, 0.0, l3))
    assert np.allclose(img, (l3 - l1) / math.sqrt(2), atol=1e-15)


def test_render_then_objective_is_zero():
    z = hemisphere(8, 9)
    light = (0.2, 0.1, 0.97)
    img = render_sfs(z, light)
    p = make_sfs(SfsInstance(img, light))
    cells = (z.shape[0] - 1) * (z.shape[1] - 1)
    assert p.smooth_value(z.ravel()) <= 1e-18 * cells


def test_hemisphere_shape():
    z = hemisphere(6, 7, height=2.0)
    assert z.shape == (6, 7)
    assert z.min() == 0.0 and z.max() == pytest.approx(2.0)


def test_pgm_p2_example(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2\n# comment\n2 2\n255\n0 255\n255 0\n")
    assert np.array_equal(load_pgm(path), [[0.0, 1.0], [1.0, 0.0]])


@pytest.mark.parametrize("binary", [True, False])
@pytest.mark.parametrize("maxval", [255, 4095, 65535])
def test_pgm_round_trip(tmp_path, rng, binary, maxval):
    grid = rng.uniform(0, 1, (7, 5))
    path = tmp_path / "r.pgm"
    write_pgm(path, grid, maxval=maxval, binary=binary)
    back, mv = load_pgm(path, return_maxval=True)
    assert mv == maxval and back.shape == grid.shape
    assert np.max(np.abs(back - grid)) <= 1.0 / maxval


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6))))
def test_pgm_p5_8bit_lossless(tmp_path_factory, raw):
    path = tmp_path_factory.mktemp("pgm") / "x.pgm"
    grid = raw / 255.0
    write_pgm(path, grid)
    assert np.array_equal(np.rint(load_pgm(path) * 255).astype(np.uint8), raw)


@pytest.mark.parametrize("content,offset", [
    (b"P3\n1 1\n255\n0\n", 0),
    (b"P2\n2 x\n255\n", 5),
    (b"P2\n2 2\n255\n0 1 2\n", 17),
    (b"P5\n2 2\n255\n\x00\x01", 13),
])
def test_pgm_parse_errors_report_offset(tmp_path, content, offset):
    path = tmp_path / "bad.pgm"
    path.write_bytes(content)
    with pytest.raises(PgmParseError) as info:
        load_pgm(path)
    assert info.value.offset == offset
    assert f"byte offset {offset}" in str(info.value)


def test_pgm_sample_above_maxval(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P2\n1 1\n10\n11\n")
    with pytest.raises(PgmParseError):
        load_pgm(path)


def test_trace_csv_round_trip(tmp_path):
    tr = subgradient_dc(make_toy("quadratic"), [1.0, 1.0], SolverConfig(max_iter=5, tol=0.0))
    path = tmp_path / "t.csv"
    write_csv(path, tr)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) - 1 == len(tr)
    back = read_trace_csv(path)
    assert np.array_equal(back["f"], tr.f_val)
    assert np.array_equal(back["grad_norm"], tr.grad_norm)
    assert back["fw_gap"] is None


def test_trace_csv_with_gap(tmp_path):
    tr = frank_wolfe_dc(make_toy("abs_dc"), lmo_box([-1.0], [1.0]), [0.8],
                        SolverConfig(c0=8.0, max_iter=3, tol=0.0))
    path = tmp_path / "fw.csv"
    write_csv(path, tr)
    assert np.array_equal(read_trace_csv(path)["fw_gap"], tr.fw_gap)


@pytest.mark.parametrize("shape", [(10, 4), (4, 10)])
def test_dataset_csv_round_trip(tmp_path, shape):
    n, p = shape
    ds = gen_regression(n, p, 0.3, 2, seed=4)
    path = tmp_path / "d.csv"
    write_dataset_csv(path, ds)
    back = read_dataset_csv(path)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)
    assert np.array_equal(back.xstar, ds.xstar)


def test_estimation_error_examples():
    xs = np.array([1.0, 0.0, 1.0, 0.0])
    assert estimation_error(xs, xs) == 0.0
    assert estimation_error(2 * xs, xs) == pytest.approx(1 / (2 * math.sqrt(4)))
    with pytest.raises(UsageError):
        estimation_error(np.zeros(4), xs)
    with pytest.raises(UsageError):
        estimation_error(np.ones(3), xs)
