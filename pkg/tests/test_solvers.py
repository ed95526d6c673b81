import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dcsolve import diagnostics as dg
from dcsolve.core import DcProblem, SolverConfig, Status, UsageError, prox_l1
from dcsolve.data import gen_regression, hemisphere, render_sfs
from dcsolve.problems import (
    BestSubsetInstance,
    SfsInstance,
    convex_subproblem_residual,
    make_best_subset,
    make_sfs,
    make_toy,
    with_box,
    with_l1,
)
from dcsolve.solvers import (
    CccpConfig,
    backtracking_gd,
    cccp,
    frank_wolfe_dc,
    lmo_ball,
    lmo_box,
    prox_dc,
    solve,
    subgradient_dc,
)


def quad(scale=1.0, center=None, dim=1):
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    return DcProblem(
        dim=dim,
        smooth_value=lambda x: 0.5 * scale * float((x - center) @ (x - center)),
        smooth_grad=lambda x: scale * (x - center),
        smoothness=scale,
    )


# subgradient-type method

def test_subgradient_exact_step():
    tr = subgradient_dc(quad(), [7.0], SolverConfig(alpha=1.0))
    assert tr.status is Status.CONVERGED
    assert tr.n_iter == 1
    assert tr.x_final[0] == 0.0


def test_subgradient_dc_fixed_point():
    p = make_toy("abs_dc")
    tr = subgradient_dc(p, [1.0], SolverConfig(alpha=0.5))
    assert tr.x_final[0] == 0.5
    assert tr.grad_norm[-1] == 0.0
    assert tr.status is Status.CONVERGED


def test_subgradient_telescoped_bound():
    p = make_toy("quadratic")
    tr = subgradient_dc(p, [1.0, 1.0], SolverConfig(alpha=0.25, max_iter=100, tol=0.0))
    assert tr.n_iter == 100
    g2 = tr.grad_norm[:101] ** 2
    # f(x^101) is not recorded; x^101 is the final iterate
    f_end = p.smooth_value(tr.x_final)
    assert g2.mean() <= 2 * (tr.f_val[0] - f_end) / (0.25 * 101) + 1e-12
    assert dg.check_rate_bound(tr, "T1", {"alpha": 0.25}).passed


def test_subgradient_rejects_prox_term():
    with pytest.raises(UsageError):
        subgradient_dc(with_l1(make_toy("quadratic"), 1.0), [1.0, 1.0])


def test_step_above_inverse_smoothness_rejected():
    with pytest.raises(UsageError):
        subgradient_dc(make_toy("quadratic"), [1.0, 1.0], SolverConfig(alpha=0.5))


def test_divergence_reported():
    # no smoothness constant declared, so a too-large step is accepted and blows up
    p = DcProblem(dim=1, smooth_value=lambda x: float(x[0] ** 4), smooth_grad=lambda x: 4 * x ** 3)
    with np.errstate(over="ignore", invalid="ignore"):
        tr = subgradient_dc(p, [10.0], SolverConfig(alpha=1.0, max_iter=50))
    assert tr.status is Status.DIVERGED
    assert not np.isfinite(tr.f_val[-1]) or not np.isfinite(tr.grad_norm[-1])


# backtracking

def test_backtracking_unit_step():
    tr = backtracking_gd(quad(), [4.0], SolverConfig(beta=0.5))
    assert tr.step_size[0] == 1.0
    assert tr.x_final[0] == 0.0


def test_backtracking_step_lower_bound():
    p = quad(scale=10.0)
    tr = backtracking_gd(p, [1.0], SolverConfig(beta=0.5, max_iter=30))
    # the sufficient-decrease test passes iff t <= 1/M = 0.1, so 0.125 is rejected
    assert tr.step_size[0] == 0.0625
    steps = tr.step_size[:-1]
    assert np.all(steps >= min(1.0, 0.5 / 10.0))
    assert dg.check_descent(tr, "backtracking").passed


def test_backtracking_sfs_monotone(rng):
    z = hemisphere(4, 4)
    inst = SfsInstance(render_sfs(z))
    p = make_sfs(inst)
    z0 = z.ravel() + 0.1 * rng.standard_normal(16)
    tr = backtracking_gd(p, z0, SolverConfig(max_iter=200, tol=0.0))
    assert np.all(np.diff(tr.f_val) <= 0)


def test_backtracking_cap_is_divergence():
    # the descent test can never pass: f decreases slower than the requirement
    p = DcProblem(dim=1, smooth_value=lambda x: 0.0, smooth_grad=lambda x: np.ones(1))
    tr = backtracking_gd(p, [0.0], SolverConfig(beta=0.5))
    assert tr.status is Status.DIVERGED


# proximal-type method

def test_prox_l1_one_step_to_zero():
    p = with_l1(quad(dim=2), 1.0)
    tr = prox_dc(p, [3.0, 0.5], SolverConfig(alpha=1.0))
    assert np.array_equal(tr.x_final, [0.0, 0.0])
    assert tr.status is Status.CONVERGED


def test_prox_best_subset_identity_design():
    inst = BestSubsetInstance(np.eye(3), np.array([3.0, 0.1, 2.0]), lam=1.0, s=1)
    p = make_best_subset(inst)
    tr = prox_dc(p, np.zeros(3), SolverConfig(max_iter=10_000, tol=1e-8))
    assert tr.status is Status.CONVERGED
    assert tr.grad_norm[-1] <= 1e-8
    assert convex_subproblem_residual(tr.x_final, inst) <= 1e-7
    assert dg.check_descent(tr, "prox").passed


def test_prox_box_projection():
    p = with_box(quad(center=2 * np.ones(3), dim=3), -1.0, 1.0)
    tr = prox_dc(p, np.zeros(3), SolverConfig(alpha=0.5))
    assert np.allclose(tr.x_final, 1.0)


def test_prox_rate_and_next_gradient():
    p = with_l1(make_toy("quadratic", eps=0.5), 0.1)
    tr = prox_dc(p, [2.0, -1.0], SolverConfig(max_iter=300, tol=0.0))
    assert dg.check_rate_bound(tr, "T2-step", {"alpha": tr.alpha}).passed
    assert dg.check_rate_bound(tr, "T2-grad", {"alpha": tr.alpha, "M_g": 4.0, "M_h": 0.5}).passed
    assert dg.check_next_gradient_bound(tr, 4.0, 0.5).passed


def test_prox_requires_prox_map():
    with pytest.raises(UsageError):
        prox_dc(make_toy("quadratic"), [1.0, 1.0])


# Frank-Wolfe

def test_fw_stationary_start():
    tr = frank_wolfe_dc(quad(), lmo_box([-1.0], [1.0]), [0.0])
    assert tr.fw_gap[0] == 0.0
    assert tr.n_iter == 0
    assert tr.status is Status.CONVERGED


def test_fw_first_gap_by_hand():
    tr = frank_wolfe_dc(make_toy("abs_dc"), lmo_box([-1.0], [1.0]), [0.8],
                        SolverConfig(c0=8.0, max_iter=1))
    # c = 2(0.8) - 1 = 0.6, s = -1, d = -1.8
    assert tr.fw_gap[0] == pytest.approx(1.08, abs=1e-15)


def test_fw_rate_on_box_quadratic():
    p = make_toy("quadratic", b=np.array([3.0, -5.0]))
    lmo = lmo_box([-1.0, -1.0], [1.0, 1.0])
    c0 = 4.0 * lmo.diameter ** 2
    tr = frank_wolfe_dc(p, lmo, [0.0, 0.0], SolverConfig(c0=c0, max_iter=400, tol=0.0))
    assert dg.check_rate_bound(tr, "T3", {"c0": c0}).passed
    gmin = np.min(tr.fw_gap[:401])
    f_best = np.min(tr.f_val)
    assert gmin <= max(2 * (tr.f_val[0] - f_best), c0) / np.sqrt(401)


def test_fw_rejects_infeasible_start():
    with pytest.raises(UsageError):
        frank_wolfe_dc(quad(), lmo_box([-1.0], [1.0]), [2.0])


def test_lmo_examples():
    assert np.array_equal(lmo_box([-1, -1], [1, 1])([0.3, -2.0]), [-1.0, 1.0])
    assert np.array_equal(lmo_ball([0, 0], 2.0)([0.0, 5.0]), [0.0, -2.0])
    assert np.array_equal(lmo_ball([1, 2], 2.0)([0.0, 0.0]), [1.0, 2.0])
    assert lmo_box([-1, -1], [1, 1]).diameter == pytest.approx(np.sqrt(8))
    assert lmo_ball([0, 0], 2.0).diameter == 4.0


@given(arrays(np.float64, 3, elements=st.floats(-5, 5)),
       arrays(np.float64, 3, elements=st.floats(-1, 1)))
def test_lmo_minimizes_over_set(c, x):
    for lmo, pt in ((lmo_box(-np.ones(3), np.ones(3)), x),
                    (lmo_ball(np.zeros(3), 1.5), 1.5 * x / max(1.0, np.linalg.norm(x)))):
        s = lmo(c)
        assert lmo.contains(s, 1e-12)
        assert s @ c <= pt @ c + 1e-12


# CCCP

def test_cccp_closed_form_inner():
    tr = cccp(make_toy("abs_dc"), [1.0], SolverConfig(alpha=0.5),
              CccpConfig(inner_max_iter=1000, inner_tol=1e-12))
    assert tr.x_final[0] == pytest.approx(0.5, abs=1e-12)
    assert tr.status is Status.CONVERGED
    assert tr.n_iter <= 2


def test_cccp_h_zero_single_outer_step():
    p = make_toy("quadratic", b=np.array([1.0, 2.0]))
    tr = cccp(p, [3.0, 3.0], SolverConfig(), CccpConfig(inner_tol=1e-12, inner_max_iter=10_000))
    assert np.allclose(tr.x_final, [1.0, 0.5], atol=1e-10)
    # one real outer step then the convergence check
    assert tr.n_iter == 1


def test_cccp_best_subset_monotone():
    ds = gen_regression(30, 8, 0.3, 3, noise_sd=0.5, seed=4)
    inst = BestSubsetInstance(ds.X, ds.y, lam=2.0, s=3)
    tr = cccp(make_best_subset(inst), np.zeros(8), SolverConfig(max_iter=50))
    moving = tr.step_norm[:-1] > 0
    assert np.all(np.diff(tr.f_val)[moving] < 0)
    assert dg.check_descent(tr, "cccp").passed
    assert np.all(np.diff(tr.inner_iters) >= 0)


def test_cccp_inner_cap_flagged():
    ds = gen_regression(30, 8, 0.3, 3, seed=4)
    inst = BestSubsetInstance(ds.X, ds.y, lam=2.0, s=3)
    tr = cccp(make_best_subset(inst), np.zeros(8), SolverConfig(max_iter=3),
              CccpConfig(inner_max_iter=2))
    assert tr.inner_capped[0]
    assert tr.inner_iters[0] == 2


def test_cccp_config_validation():
    with pytest.raises(UsageError):
        CccpConfig(inner_tol=0.0)
    with pytest.raises(UsageError):
        CccpConfig(inner_max_iter=0)


# dispatch and determinism

@pytest.mark.parametrize("algo", ["subgradient", "backtracking", "prox", "cccp"])
def test_determinism(algo):
    p = make_toy("quadratic", eps=0.5)
    if algo in ("prox", "cccp"):
        p = with_l1(p, 0.1)
    a = solve(algo, p, [1.0, -2.0], SolverConfig(max_iter=50))
    b = solve(algo, p, [1.0, -2.0], SolverConfig(max_iter=50))
    assert np.array_equal(a.f_val, b.f_val)
    assert np.array_equal(a.grad_norm, b.grad_norm)
    assert np.array_equal(a.x_final, b.x_final)


def test_solve_unknown_and_missing_lmo():
    with pytest.raises(UsageError):
        solve("newton", quad(), [1.0])
    with pytest.raises(UsageError):
        solve("frank_wolfe", quad(), [0.0])


def test_row_count_at_iteration_cap():
    tr = subgradient_dc(make_toy("quadratic"), [1.0, 1.0], SolverConfig(max_iter=5, tol=0.0))
    assert len(tr) == 6
    assert tr.status is Status.ITER_CAP
