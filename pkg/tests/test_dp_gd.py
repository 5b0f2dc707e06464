import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpflow.dp_gd import (DPGDConfig, DivergenceError, StabilityError,
                          Trajectory, clip_gradient, clipped_loss_derivative,
                          detect_clipping, per_sample_gradient,
                          read_checkpoint, run_dp_gd, run_gd, write_checkpoint,
                          write_summary_csv, _checkpoint_steps)
from dpflow.dynamics import gradient_flow, min_norm_solution
from dpflow.rf_model import featurize, init_features, sample_data


# ------------------------------------------------------------- gradients

def test_gradient_zero_at_interpolation():
    phi = np.array([1.0, -2.0, 0.5])
    theta = np.array([2.0, 1.0, 2.0])  # phi . theta = 1
    assert np.array_equal(per_sample_gradient(theta, phi, 1.0), np.zeros(3))


def test_gradient_unit_case():
    e1 = np.array([1.0, 0.0])
    assert np.array_equal(per_sample_gradient(e1, e1, 0.0), 2.0 * e1)


def test_gradient_matches_finite_difference(rng_factory):
    rng = rng_factory(4)
    phi = rng.standard_normal(20)
    theta = rng.standard_normal(20)
    y = 0.7
    g = per_sample_gradient(theta, phi, y)
    h = 1e-6
    for k in (0, 7, 19):
        ek = np.zeros(20)
        ek[k] = h
        num = (((phi @ (theta + ek) - y) ** 2) - ((phi @ (theta - ek) - y) ** 2)) / (2 * h)
        assert math.isclose(g[k], num, rel_tol=1e-6, abs_tol=1e-6)


def test_clip_gradient_branches():
    g = np.array([0.3, 0.4])  # norm 0.5
    out, clipped = clip_gradient(g, 1.0)
    assert not clipped and np.array_equal(out, g)
    out, clipped = clip_gradient(4.0 * g, 1.0)  # norm 2
    assert clipped and math.isclose(float(np.linalg.norm(out)), 1.0, rel_tol=1e-15)
    out, clipped = clip_gradient(2.0 * g, 1.0)  # norm exactly 1: no-op
    assert not clipped and np.array_equal(out, 2.0 * g)
    with pytest.raises(ValueError):
        clip_gradient(g, 0.0)


@given(st.integers(0, 10**6), st.floats(0.05, 20.0))
@settings(max_examples=60, deadline=None)
def test_clip_gradient_contract(seed, c_clip):
    g = np.random.default_rng(seed).standard_normal(8)
    out, clipped = clip_gradient(g, c_clip)
    assert float(np.linalg.norm(out)) <= c_clip * (1 + 1e-12)
    assert clipped == (float(np.linalg.norm(g)) > c_clip)
    if not clipped:
        assert np.array_equal(out, g)
    else:
        # direction preserved
        assert np.allclose(out / np.linalg.norm(out), g / np.linalg.norm(g))


def test_clipped_loss_derivative_cases():
    assert clipped_loss_derivative(0.0, 3.0, 1.0) == 0.0
    # |2z| feat_norm <= c: exactly 2z
    assert clipped_loss_derivative(0.1, 2.0, 1.0) == pytest.approx(0.2, abs=0)
    # clipped branch: magnitude exactly c/feat_norm, sign kept
    val = clipped_loss_derivative(-5.0, 2.0, 1.0)
    assert math.isclose(val, -0.5, rel_tol=1e-15)
    with pytest.raises(ValueError):
        clipped_loss_derivative(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        clipped_loss_derivative(1.0, 1.0, -2.0)


def test_clip_equals_loss_derivative_form(rng_factory):
    # the two ways of writing the clipped gradient agree componentwise
    rng = rng_factory(11)
    for _ in range(100):
        phi = rng.standard_normal(12)
        theta = rng.standard_normal(12)
        y = float(rng.choice([-1.0, 1.0]))
        c = float(rng.uniform(0.05, 5.0))
        direct, _ = clip_gradient(per_sample_gradient(theta, phi, y), c)
        z = float(phi @ theta - y)
        via_loss = phi * clipped_loss_derivative(z, float(np.linalg.norm(phi)), c)
        assert np.max(np.abs(direct - via_loss)) <= 1e-12


def test_mean_clipped_gradient_norm_bounded(inst, rng_factory):
    rng = rng_factory(5)
    feat_norms = np.linalg.norm(inst.phi, axis=1)
    for _ in range(20):
        theta = rng.standard_normal(inst.fm.p) * 10.0
        c = float(rng.uniform(0.01, 2.0))
        resid = inst.phi @ theta - inst.ds.Y
        scale = np.minimum(1.0, c / np.maximum(2.0 * np.abs(resid) * feat_norms, 1e-300))
        mean_grad = (2.0 / inst.ds.n) * (inst.phi.T @ (resid * scale))
        assert float(np.linalg.norm(mean_grad)) <= c * (1 + 1e-12)


def test_clipped_gradient_field_is_lipschitz(inst, rng_factory):
    rng = rng_factory(6)
    feat_norms = np.linalg.norm(inst.phi, axis=1)
    bound = 2.0 * float(np.mean(feat_norms**2)) + 1e-6

    def grad(theta, c):
        z = inst.phi @ theta - inst.ds.Y
        return inst.phi.T @ clipped_loss_derivative(z, feat_norms, c) / inst.ds.n

    for _ in range(25):
        c = float(rng.uniform(0.05, 50.0))
        a = rng.standard_normal(inst.fm.p)
        b = rng.standard_normal(inst.fm.p)
        quot = np.linalg.norm(grad(a, c) - grad(b, c)) / np.linalg.norm(a - b)
        assert quot <= bound


# ------------------------------------------------------------- descent

def test_one_step_from_zero(inst):
    cfg = DPGDConfig(eta=0.01, steps=1)
    traj = run_dp_gd(cfg, inst.fm, inst.ds, phi=inst.phi)
    expect = (2.0 * 0.01 / inst.ds.n) * (inst.phi.T @ inst.ds.Y)
    assert np.allclose(traj.final, expect, rtol=0, atol=1e-15)


def test_noiseless_run_reaches_pseudoinverse():
    ds = sample_data(10, 8, seed=3)
    fm = init_features(40, 8, seed=3)
    phi = featurize(fm, ds.X)
    lam_max = float(np.linalg.eigvalsh(phi @ phi.T)[-1])
    cfg = DPGDConfig(eta=0.45 * ds.n / lam_max, steps=4000)
    traj = run_gd(cfg, fm, ds, phi=phi)
    target = np.linalg.pinv(phi, rcond=1e-10) @ ds.Y
    assert np.linalg.norm(traj.final - target) < 1e-6


def test_sigma_zero_bit_identical_to_plain_gd(inst):
    cfg = DPGDConfig(eta=inst.eta, steps=30)
    dp = run_dp_gd(cfg, inst.fm, inst.ds, seed=0, phi=inst.phi)
    gd = run_gd(cfg, inst.fm, inst.ds, phi=inst.phi)
    assert np.array_equal(dp.thetas, gd.thetas)
    assert np.array_equal(dp.train_loss, gd.train_loss)


def test_training_loss_monotone_without_noise(inst):
    cfg = DPGDConfig(eta=inst.eta, steps=60)
    traj = run_gd(cfg, inst.fm, inst.ds, phi=inst.phi)
    assert np.all(np.diff(traj.train_loss) <= 1e-12)
    assert traj.train_loss[0] == pytest.approx(1.0)  # theta0 = 0, labels +-1


def test_pseudoinverse_is_fixed_point():
    ds = sample_data(10, 8, seed=2)
    fm = init_features(40, 8, seed=2)
    phi = featurize(fm, ds.X)
    theta_star = np.linalg.pinv(phi, rcond=1e-10) @ ds.Y
    lam_max = float(np.linalg.eigvalsh(phi @ phi.T)[-1])
    cfg = DPGDConfig(eta=0.1 * ds.n / lam_max, steps=5, theta0=theta_star)
    traj = run_gd(cfg, fm, ds, phi=phi)
    assert np.linalg.norm(traj.final - theta_star) < 1e-8


def test_matches_gradient_flow_at_small_eta(inst):
    steps = 3200
    eta = inst.eta / 160.0
    traj = run_gd(DPGDConfig(eta=eta, steps=steps), inst.fm, inst.ds, phi=inst.phi)
    flow = gradient_flow(eta * steps, inst.sd, inst.ds.Y)
    assert np.linalg.norm(traj.final - flow) < 1e-4


def test_stability_guard():
    ds = sample_data(12, 4, seed=3)
    fm = init_features(30, 4, seed=3)
    phi = featurize(fm, ds.X)
    lam_max = float(np.linalg.eigvalsh(phi @ phi.T)[-1])
    with pytest.raises(StabilityError, match="stability"):
        run_gd(DPGDConfig(eta=1.01 * ds.n / lam_max, steps=3), fm, ds, phi=phi)
    run_gd(DPGDConfig(eta=0.99 * ds.n / lam_max, steps=3), fm, ds, phi=phi)


def test_divergence_error_names_step(inst):
    cfg = DPGDConfig(eta=1e4 * inst.eta, steps=500)
    with pytest.raises(DivergenceError, match=r"step \d+"):
        run_dp_gd(cfg, inst.fm, inst.ds, phi=inst.phi)


def test_noise_updates_have_calibrated_variance():
    # zero feature map: the drift vanishes and every update is pure noise
    ds = sample_data(20, 4, seed=5)
    fm_zero = init_features(50, 4, seed=5)
    fm_zero = type(fm_zero)(V=np.zeros((50, 4)), activation="tanh")
    eta, c, sigma = 0.3, 2.5, 1.7
    cfg = DPGDConfig(eta=eta, steps=600, c_clip=c, sigma=sigma)
    traj = run_dp_gd(cfg, fm_zero, ds, seed=9)
    diffs = np.diff(traj.thetas, axis=0)
    target = eta * (2.0 * c * sigma / ds.n) ** 2
    assert abs(float(np.var(diffs)) / target - 1.0) < 0.05


def test_recorded_increments(inst):
    cfg = DPGDConfig(eta=inst.eta, steps=8, c_clip=5.0, sigma=1.1)
    traj = run_dp_gd(cfg, inst.fm, inst.ds, seed=3, phi=inst.phi,
                     record_noise=True)
    assert traj.wiener.shape == (8, inst.fm.p)
    quiet = run_dp_gd(DPGDConfig(eta=inst.eta, steps=8), inst.fm, inst.ds,
                      phi=inst.phi, record_noise=True)
    assert not quiet.wiener.any()


def test_clip_events_recorded_and_fraction(inst):
    cfg = DPGDConfig(eta=inst.eta, steps=10, c_clip=1e-3)
    traj = run_dp_gd(cfg, inst.fm, inst.ds, phi=inst.phi)
    assert traj.clip_events.shape == (10, inst.ds.n)
    assert traj.clip_events.any()
    assert traj.clip_fraction.shape == (10,)
    assert traj.clip_fraction.max() <= 1.0


def test_config_validation():
    for bad in (dict(eta=0.0, steps=1), dict(eta=0.1, steps=-1),
                dict(eta=0.1, steps=1, c_clip=0.0),
                dict(eta=0.1, steps=1, sigma=-1.0)):
        with pytest.raises(ValueError):
            DPGDConfig(**bad)


def test_noise_requires_seed(inst):
    with pytest.raises(ValueError, match="seed"):
        run_dp_gd(DPGDConfig(eta=inst.eta, steps=2, sigma=1.0),
                  inst.fm, inst.ds, phi=inst.phi)


# ------------------------------------------------------------- clipping view

def test_detect_clipping_trivial_cases(inst):
    report = detect_clipping(np.zeros(inst.fm.p), inst.fm, inst.ds, 1e9,
                             phi=inst.phi)
    assert not report.flags.any() and report.margin > 0

    theta_star = min_norm_solution(inst.sd, inst.ds.Y)
    report = detect_clipping(theta_star, inst.fm, inst.ds, 1e-6, phi=inst.phi)
    assert not report.flags.any()


def test_detect_clipping_agrees_with_clip_gradient(inst, rng_factory):
    rng = rng_factory(8)
    for _ in range(10):
        theta = rng.standard_normal(inst.fm.p)
        c = float(rng.uniform(0.1, 10.0))
        report = detect_clipping(theta, inst.fm, inst.ds, c, phi=inst.phi)
        for i in range(inst.ds.n):
            g = per_sample_gradient(theta, inst.phi[i], inst.ds.Y[i])
            assert report.flags[i] == clip_gradient(g, c)[1]


# ------------------------------------------------------------- persistence

def test_checkpoint_policy():
    assert np.array_equal(_checkpoint_steps(12, 100), np.arange(13))
    sparse = _checkpoint_steps(12, 10**7)
    assert np.array_equal(sparse, [0, 1, 2, 4, 8, 12])
    assert _checkpoint_steps(0, 10**9).tolist() == [0]


def test_checkpoint_roundtrip(tmp_path, inst):
    cfg = DPGDConfig(eta=inst.eta, steps=5, c_clip=10.0, sigma=0.5)
    traj = run_dp_gd(cfg, inst.fm, inst.ds, seed=1, phi=inst.phi)
    path = tmp_path / "run.ckpt"
    write_checkpoint(traj, path)
    back = read_checkpoint(path)
    assert np.array_equal(back, traj.thetas)
    with open(path, "r+b") as fh:
        fh.write(b"XXXX")
    with pytest.raises(ValueError, match="magic"):
        read_checkpoint(path)


def test_summary_csv(tmp_path, inst):
    cfg = DPGDConfig(eta=inst.eta, steps=4)
    traj = run_dp_gd(cfg, inst.fm, inst.ds, phi=inst.phi)
    path = tmp_path / "run.csv"
    write_summary_csv(traj, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,train_loss,clip_fraction,theta_norm"
    assert len(lines) == 6
    first = lines[1].split(",")
    assert first[0] == "0" and float(first[1]) == pytest.approx(1.0)
