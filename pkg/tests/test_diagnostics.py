import math

import numpy as np
import pytest

import dpflow.dp_gd
from dpflow.diagnostics import (RegimeError, clip_free_certificate,
                                regime_check, spectrum_report)
from dpflow.dp_gd import DPGDConfig, run_dp_gd, run_gd
from dpflow.dynamics import SpectralDecomp, decompose, min_norm_solution
from dpflow.rf_model import featurize, init_features, sample_data


def _flat_decomp(svals, n, p):
    k = len(svals)
    return SpectralDecomp(U=np.eye(n, k), s=np.asarray(svals, dtype=float),
                          Vt=np.eye(k, p))


# ------------------------------------------------------------- spectrum

def test_spectrum_flat_case():
    sd = _flat_decomp([2.0] * 6, 6, 10)
    rep = spectrum_report(sd, 4)
    assert rep.lambda_d == rep.lambda_d_plus_1 == rep.lambda_min == 4.0
    assert rep.gap_ratio == 1.0


def test_spectrum_rank_deficient_gap_is_infinite():
    sd = _flat_decomp([2.0, 2.0, 0.0, 0.0], 5, 8)
    rep = spectrum_report(sd, 2)
    assert rep.gap_ratio == math.inf and rep.lambda_min == 0.0


def test_spectrum_needs_enough_samples():
    sd = _flat_decomp([3.0, 2.0, 1.0], 3, 7)
    with pytest.raises(RegimeError):
        spectrum_report(sd, 3)
    with pytest.raises(ValueError):
        spectrum_report(sd, 0)


def test_spectrum_gap_grows_with_sample_size():
    gaps = []
    for n in (25, 50, 100):
        ds = sample_data(n, 5, seed=1)
        fm = init_features(300, 5, seed=1)
        sd = decompose(fm, ds)
        rep = spectrum_report(sd, 5)
        assert rep.lambda_d >= rep.lambda_d_plus_1 >= rep.lambda_min > 0.0
        gaps.append(rep.gap_ratio)
    assert gaps[0] < gaps[1] < gaps[2]


# ------------------------------------------------------------- certificate

def test_certificate_trivial_radius(inst):
    traj = run_gd(DPGDConfig(eta=inst.eta, steps=10), inst.fm, inst.ds,
                  phi=inst.phi)
    rep = clip_free_certificate(traj, inst.fm, inst.ds, c_clip=1e9,
                                phi=inst.phi)
    assert rep.clip_free and rep.margin > 0.0 and rep.slack == 0.0


def test_certificate_from_interpolating_start(inst):
    theta_star = min_norm_solution(inst.sd, inst.ds.Y)
    traj = run_gd(DPGDConfig(eta=inst.eta, steps=5, theta0=theta_star),
                  inst.fm, inst.ds, phi=inst.phi)
    rep = clip_free_certificate(traj, inst.fm, inst.ds, c_clip=0.01,
                                phi=inst.phi)
    assert rep.clip_free


def test_certificate_monotone_in_radius(inst):
    traj = run_gd(DPGDConfig(eta=inst.eta, steps=20), inst.fm, inst.ds,
                  phi=inst.phi)
    radii = [1e-4, 0.1, 1.0, 10.0, 1e4]
    reports = [clip_free_certificate(traj, inst.fm, inst.ds, c_clip=c,
                                     phi=inst.phi) for c in radii]
    margins = [r.margin for r in reports]
    assert margins == sorted(margins)
    flags = [r.clip_free for r in reports]
    assert flags == sorted(flags)  # never True before False
    assert not reports[0].clip_free and reports[-1].clip_free


def test_certificate_implies_no_clip_events(inst):
    cfg = DPGDConfig(eta=inst.eta, steps=15, c_clip=3.0)
    traj = run_dp_gd(cfg, inst.fm, inst.ds, phi=inst.phi)
    rep = clip_free_certificate(traj, inst.fm, inst.ds, phi=inst.phi)
    if rep.clip_free:
        assert not traj.clip_events.any()
    default = clip_free_certificate(traj, inst.fm, inst.ds, c_clip=3.0,
                                    phi=inst.phi)
    assert default == rep


def test_certificate_slack_for_sparse_checkpoints(inst, monkeypatch):
    monkeypatch.setattr(dpflow.dp_gd, "CHECKPOINT_DENSE_LIMIT", 1)
    traj = run_gd(DPGDConfig(eta=inst.eta, steps=24), inst.fm, inst.ds,
                  phi=inst.phi)
    assert len(traj.checkpoint_steps) < 25
    rep = clip_free_certificate(traj, inst.fm, inst.ds, c_clip=2.0,
                                phi=inst.phi)
    assert rep.slack > 0.0
    monkeypatch.setattr(dpflow.dp_gd, "CHECKPOINT_DENSE_LIMIT", 10**7)
    dense = clip_free_certificate(
        run_gd(DPGDConfig(eta=inst.eta, steps=24), inst.fm, inst.ds,
               phi=inst.phi),
        inst.fm, inst.ds, c_clip=2.0, phi=inst.phi)
    # the sparse view is conservative: it certifies no more than the dense one
    assert rep.margin <= dense.margin


# ------------------------------------------------------------- regime

def test_regime_boundary_and_sides():
    rep = regime_check(2000, 100, 4_000_000)
    assert rep.n_sq_over_p == 1.0 and rep.ok_n_vs_p

    rep = regime_check(2000, 100, 40_000)
    assert rep.n_sq_over_p == 100.0 and not rep.ok_n_vs_p
    assert not rep.in_regime


def test_regime_ratio_values():
    rep = regime_check(500, 50, 10**6)
    log50 = math.log(50)
    assert rep.n_sq_over_p == pytest.approx(0.25)
    assert rep.log_p_over_log_n == pytest.approx(6 * math.log(10) / math.log(500))
    assert rep.n_over_d_log2d == pytest.approx(10.0 / log50**2)
    assert rep.n_log3d_over_d32 == pytest.approx(500 * log50**3 / 50**1.5)
    assert rep.in_regime == (rep.ok_n_vs_p and rep.ok_logs
                             and rep.ok_lower and rep.ok_upper)


def test_regime_one_dimensional_input():
    rep = regime_check(100, 1, 10**4)
    assert rep.n_over_d_log2d == math.inf and rep.ok_lower
    assert rep.n_log3d_over_d32 == 0.0 and rep.ok_upper


def test_regime_validation():
    for n, d, p in ((1, 1, 1), (10, 0, 5), (10, 2, 0)):
        with pytest.raises(ValueError):
            regime_check(n, d, p)
