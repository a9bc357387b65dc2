import math

import numpy as np
import pytest

from discsde.errors import GridMismatch
from discsde.experiments import fit_rate
from discsde.geometry import Sphere, vnorm
from discsde.kernels import backend_for
from discsde.model import Diffusion, PiecewiseDrift, SdeModel, example1, gbm, sign1d
from discsde.solver import (
    EmTrajectory, em_continuous_eval, em_discrete, em_transformed, ito_residual,
    linear_interpolation, neighborhood_occupation, occupation_indicator_stat, sample_increments,
    sample_path, transformed_endpoints,
)
from discsde.transform import TransformSpec


def constant_model(c, x0=(0.5, 0.0), sigma=0.0):
    """Drift ``c`` on both sides of the unit circle, diffusion ``sigma * I``."""
    c = np.asarray(c, dtype=float)
    drift = PiecewiseDrift(Sphere([0.0, 0.0], 1.0), (lambda x: np.broadcast_to(c, x.shape),) * 2)
    diff = Diffusion(scalar=lambda x: np.full(x.shape[:-1], sigma), dim=2)
    return SdeModel(x0, drift, diff, "constant")


# --- Brownian paths ------------------------------------------------------

def test_sample_path_deterministic():
    a = sample_path(7, 3, 256, 2)
    b = sample_path(7, 3, 256, 2)
    assert a.increments.tobytes() == b.increments.tobytes()
    assert (a.N, a.d, a.rep_id, a.master_seed) == (256, 2, 3, 7)
    np.testing.assert_array_equal(sample_increments(7, [3], 256, 2)[0], a.increments)


def test_sample_path_independent_streams():
    a = sample_path(1, 0, 2**12, 1).increments[:, 0]
    b = sample_path(1, 1, 2**12, 1).increments[:, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) <= 0.05


def test_single_step_variance():
    draws = sample_increments(5, range(100_000), 1, 1).ravel()
    assert np.var(draws) == pytest.approx(1.0, rel=0.05)


def test_increment_moments():
    N, count = 2**10, 100
    z = sample_increments(11, range(count), N, 1).ravel()
    assert abs(z.mean()) <= 4.0 / math.sqrt(count * N)
    assert np.var(z) * N == pytest.approx(1.0, rel=0.05)


def test_coarsening_is_ascending_block_sum():
    path = sample_path(3, 0, 64, 2)
    expected = np.zeros((8, 2))
    for i in range(8):
        acc = path.increments[8 * i].copy()
        for k in range(1, 8):
            acc = acc + path.increments[8 * i + k]
        expected[i] = acc
    assert path.coarse(8).tobytes() == expected.tobytes()
    np.testing.assert_array_equal(path.coarse(64), path.increments)
    np.testing.assert_allclose(path.values()[-1], path.increments.sum(axis=0), atol=1e-14)


# --- Euler-Maruyama ------------------------------------------------------

def test_em_trivial_models():
    path = sample_path(0, 0, 64, 2)
    still = em_discrete(constant_model([0.0, 0.0]), path, 16)
    assert np.all(still.values == [0.5, 0.0])
    moved = em_discrete(constant_model([0.75, -0.25]), path, 16)
    np.testing.assert_array_equal(moved.values[-1], [1.25, -0.25])


def test_em_grid_mismatch():
    path = sample_path(0, 0, 64, 1)
    with pytest.raises(GridMismatch):
        em_discrete(gbm(), path, 48)
    with pytest.raises(GridMismatch):
        em_continuous_eval(gbm(), path, 0)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_em_matches_recursion(backend):
    model = example1()
    path = sample_path(2, 5, 256, 2)
    traj = em_discrete(model, path, 32, backend)
    inc = path.coarse(32)
    x = model.x0.copy()
    for i in range(32):
        x = x + model.drift(x) / 32 + model.diffusion(x) @ inc[i]
        np.testing.assert_allclose(traj.values[i + 1], x, atol=1e-13)


def test_em_at_finest_grid_is_self_consistent():
    model = example1()
    path = sample_path(4, 0, 128, 2)
    a = em_discrete(model, path, 128)
    ends = backend_for(model).endpoints(model, path.increments[None], [128, 128])
    assert vnorm(ends[0, 0] - ends[0, 1]) == 0.0
    np.testing.assert_array_equal(a.values[-1], ends[0, 0])


def test_continuous_eval_agrees_on_nodes():
    model = example1()
    path = sample_path(9, 1, 512, 2)
    disc = em_discrete(model, path, 64)
    cont = em_continuous_eval(model, path, 64)
    assert cont.values.tobytes() == disc.values.tobytes()
    assert cont.fine.shape == (513, 2)
    full = em_continuous_eval(model, path, 512)
    np.testing.assert_array_equal(full.fine, em_discrete(model, path, 512).values)


def test_continuous_eval_linear_without_noise():
    path = sample_path(0, 0, 64, 2)
    fine = em_continuous_eval(constant_model([0.5, -0.25]), path, 8).fine
    t = np.arange(65) / 64
    np.testing.assert_array_equal(fine, np.array([0.5, 0.0]) + t[:, None] * [0.5, -0.25])


def test_continuous_eval_partial_sums():
    model = gbm()
    path = sample_path(1, 2, 64, 1)
    traj = em_continuous_eval(model, path, 4)
    w = path.values()
    x = traj.values[1]
    for k in range(16, 32):
        expect = x + model.drift(x) * (k - 16) / 64 + model.diffusion(x) @ (w[k] - w[16])
        np.testing.assert_allclose(traj.fine[k], expect, atol=1e-14)


def test_em_trajectory_validates_length():
    with pytest.raises(ValueError):
        EmTrajectory(4, np.zeros((4, 1)))


def test_linear_interpolation():
    traj = EmTrajectory(4, np.array([[0.0], [1.0], [3.0], [2.0], [5.0]]))
    for i in range(5):
        np.testing.assert_array_equal(linear_interpolation(traj, i / 4), traj.values[i])
    np.testing.assert_allclose(linear_interpolation(traj, 0.375), [2.0])
    const = EmTrajectory(3, np.ones((4, 2)))
    np.testing.assert_allclose(linear_interpolation(const, np.linspace(0, 1, 9)), np.ones((9, 2)))
    with pytest.raises(ValueError):
        linear_interpolation(traj, 1.5)


# --- transformed scheme --------------------------------------------------

def test_em_transformed_equals_em_when_jump_free():
    model = gbm(0.05, 0.01)
    spec = TransformSpec(model)
    path = sample_path(3, 0, 256, 1)
    y = em_transformed(model, spec, path, 64)
    np.testing.assert_allclose(y, em_discrete(model, path, 64).values[-1], atol=1e-12)


@pytest.mark.slow
def test_em_transformed_converges_to_em():
    model = example1()
    spec = TransformSpec(model)
    ns = [2**k for k in range(6, 11)]
    dw = sample_increments(1, range(2000), 2**10, 2)
    ends = backend_for(model).endpoints(model, dw, ns)
    l2 = [math.sqrt(np.mean(vnorm(transformed_endpoints(spec, dw, n) - ends[:, k]) ** 2))
          for k, n in enumerate(ns)]
    assert fit_rate(ns, l2).slope <= -0.3


# --- occupation ----------------------------------------------------------

def test_occupation_trivial_cases():
    path = sample_path(0, 0, 64, 2)
    off = constant_model([0.0, 0.0], x0=(0.5, 0.0))
    on = constant_model([0.0, 0.0], x0=(1.0, 0.0))
    for backend in ("python", "compiled"):
        assert occupation_indicator_stat(off, path, 8, backend) == 0.0
        assert occupation_indicator_stat(on, path, 8, backend) == 1.0
        assert neighborhood_occupation(off, path, 8, 0.4, backend) == 0.0
        assert neighborhood_occupation(on, path, 8, 0.4, backend) == 1.0
    assert neighborhood_occupation(example1(), sample_path(0, 0, 256, 2), 16, 0.0) == 0.0
    with pytest.raises(ValueError):
        neighborhood_occupation(off, path, 8, -1.0)


def test_occupation_positive_and_bounded():
    model = example1()
    vals = [occupation_indicator_stat(model, sample_path(2, r, 2**12, 2), 2**8) for r in range(50)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert np.mean(vals) > 0


def test_occupation_matches_definition():
    model = example1()
    path = sample_path(6, 0, 512, 2)
    traj = em_continuous_eval(model, path, 32)
    left = np.repeat(traj.values[:-1], 16, axis=0)
    fine = traj.fine[:-1]
    ind = model.surface.distance(left) <= vnorm(fine - left)
    assert occupation_indicator_stat(model, path, 32) == pytest.approx(ind.mean(), abs=1e-15)
    near = model.surface.distance(fine) < 0.05
    assert neighborhood_occupation(model, path, 32, 0.05) == pytest.approx(near.mean(), abs=1e-15)


# --- Ito residual --------------------------------------------------------

def test_ito_residual_example1_inequality():
    model = example1()
    spec = TransformSpec(model)
    N, d = 2**12, 2
    for r in range(10):
        lhs, rhs = ito_residual(model, spec, sample_path(8, r, N, d), 2**6)
        assert lhs <= rhs + 10 * math.sqrt(d) / N


def test_ito_residual_constant_sigma():
    # sigma constant: the covariance mismatch vanishes identically, and what is
    # left is the Ito-sum quadrature error, which shrinks as the grid refines
    model = sign1d()
    spec = TransformSpec(model)
    coarse, fine = [], []
    for r in range(10):
        lhs, rhs = ito_residual(model, spec, sample_path(1, r, 2**10, 1), 2**5)
        assert rhs == 0.0
        coarse.append(lhs)
        fine.append(ito_residual(model, spec, sample_path(1, r, 2**14, 1), 2**5)[0])
    assert np.mean(fine) < 0.5 * np.mean(coarse)


def test_ito_residual_outside_tube_is_quadrature_only():
    model = sign1d(x0=6.0)
    spec = TransformSpec(model)
    path = sample_path(0, 0, 2**12, 1)
    traj = em_continuous_eval(model, path, 2**6)
    assert np.min(model.surface.distance(traj.fine)) > spec.eps
    lhs, rhs = ito_residual(model, spec, path, 2**6)
    assert rhs == 0.0 and lhs <= 1e-12
    with pytest.raises(GridMismatch):
        ito_residual(model, spec, path, 3)
