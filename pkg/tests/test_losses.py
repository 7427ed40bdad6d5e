from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fd_grad, rel_err, softmax_rows
from spoofprobe.losses import (
    LossSpec,
    cce,
    curricular,
    focal,
    gce,
    lambert_w,
    per_class_mean,
    softmax,
    superloss,
    update_hardness,
)


def random_batch(rng: np.random.Generator, n: int = 8, span: float = 2.0):
    z = rng.uniform(-span, span, size=(n, 2))
    y = rng.integers(0, 2, size=n)
    return z, softmax_rows(z), y


# ---------------------------------------------------------------------------
# Cross entropy.


def test_cce_certain_prediction_is_zero():
    loss, _ = cce(np.array([1.0, 0.0]), 0, weights=(0.9, 0.1))
    assert loss == 0.0


def test_cce_half_probability_closed_form():
    loss, _ = cce(np.array([0.5, 0.5]), 0, weights=(0.9, 0.1))
    assert loss == pytest.approx(0.9 * math.log(2.0), rel=1e-12)


def test_cce_uses_label_weight():
    p = np.array([[0.3, 0.7], [0.3, 0.7]])
    loss, _ = cce(p, np.array([0, 1]), weights=(0.9, 0.1))
    assert loss[0] == pytest.approx(-0.9 * math.log(0.3))
    assert loss[1] == pytest.approx(-0.1 * math.log(0.7))


def test_cce_floor_keeps_loss_finite():
    loss, grad = cce(np.array([0.0, 1.0]), 0)
    assert np.isfinite(loss) and np.all(np.isfinite(grad))
    assert loss == pytest.approx(-0.9 * math.log(1e-12))


def test_cce_rejects_bad_rows():
    with pytest.raises(ValueError):
        cce(np.array([0.7, 0.7]), 0)
    with pytest.raises(ValueError):
        cce(np.array([0.5, 0.5]), 2)
    with pytest.raises(ValueError):
        cce(np.array([0.5, 0.5]), 0, weights=(-1.0, 1.0))


def test_cce_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        z, p, y = random_batch(rng)
        _, grad = cce(p, y)
        fd = fd_grad(lambda: float(np.sum(cce(softmax_rows(z), y)[0])), z)
        assert rel_err(grad, fd) < 1e-4


# ---------------------------------------------------------------------------
# Focal.


def test_focal_gamma_zero_equals_cce_exactly():
    rng = np.random.default_rng(1)
    for _ in range(20):
        _, p, y = random_batch(rng)
        lf, gf = focal(p, y, gamma=0.0)
        lc, gc = cce(p, y)
        assert np.max(np.abs(lf - lc)) <= 1e-12
        assert np.max(np.abs(gf - gc)) <= 1e-12


def test_focal_certain_prediction_is_zero():
    loss, _ = focal(np.array([1.0, 0.0]), 0, weights=(1.0, 1.0), gamma=2.0)
    assert loss == 0.0


def test_focal_half_probability_closed_form():
    loss, _ = focal(np.array([0.5, 0.5]), 0, weights=(1.0, 1.0), gamma=2.0)
    assert loss == pytest.approx(0.25 * math.log(2.0), rel=1e-12)


def test_focal_downweights_easy_samples():
    easy, _ = focal(np.array([0.95, 0.05]), 0, weights=(1.0, 1.0))
    easy_ce, _ = cce(np.array([0.95, 0.05]), 0, weights=(1.0, 1.0))
    assert easy < easy_ce


def test_focal_rejects_negative_gamma():
    with pytest.raises(ValueError):
        focal(np.array([0.5, 0.5]), 0, gamma=-1.0)


def test_focal_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    for gamma in (1.0, 2.0, 3.5):
        for _ in range(10):
            z, p, y = random_batch(rng)
            _, grad = focal(p, y, gamma=gamma)
            fd = fd_grad(lambda: float(np.sum(focal(softmax_rows(z), y, gamma=gamma)[0])), z)
            assert rel_err(grad, fd) < 1e-4


# ---------------------------------------------------------------------------
# Generalized cross entropy.


def test_gce_certain_prediction_is_zero():
    loss, _ = gce(np.array([1.0, 0.0]), 0)
    assert loss == 0.0


def test_gce_q_one_is_weighted_complement():
    loss, _ = gce(np.array([0.3, 0.7]), 0, weights=(0.9, 0.1), q=1.0)
    assert loss == pytest.approx(0.9 * (1.0 - 0.3), rel=1e-12)


def test_gce_small_q_approaches_cce():
    rng = np.random.default_rng(3)
    for _ in range(50):
        _, p, y = random_batch(rng, span=2.0)
        lg, _ = gce(p, y, q=1e-4)
        lc, _ = cce(p, y)
        assert np.max(np.abs(lg - lc)) < 1e-3


def test_gce_rejects_q_out_of_range():
    for q in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            gce(np.array([0.5, 0.5]), 0, q=q)


def test_gce_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    for q in (0.3, 0.7, 1.0):
        for _ in range(10):
            z, p, y = random_batch(rng)
            _, grad = gce(p, y, q=q)
            fd = fd_grad(lambda: float(np.sum(gce(softmax_rows(z), y, q=q)[0])), z)
            assert rel_err(grad, fd) < 1e-4


# ---------------------------------------------------------------------------
# Lambert W.


def lambert_grid() -> np.ndarray:
    lo = -1.0 / math.e
    offsets = np.logspace(-12, np.log10(1e6 - lo), 400)
    return np.concatenate([[lo], lo + offsets])


def test_lambert_identities():
    assert lambert_w(0.0) == pytest.approx(0.0, abs=1e-15)
    assert lambert_w(math.e) == pytest.approx(1.0, abs=1e-12)
    assert lambert_w(-1.0 / math.e) == pytest.approx(-1.0, abs=1e-7)


def test_lambert_rejects_below_branch_point():
    with pytest.raises(ValueError):
        lambert_w(-1.0 / math.e - 1e-6)


def test_lambert_residual_on_log_spaced_grid():
    x = lambert_grid()
    w = lambert_w(x)
    residual = np.abs(w * np.exp(w) - x)
    assert np.all(residual <= 1e-12 * np.maximum(1.0, np.abs(x)))


def test_lambert_monotone_on_grid():
    x = lambert_grid()
    w = lambert_w(x)
    assert np.all(np.diff(w) > 0)


def test_lambert_against_scipy_if_available():
    scipy_special = pytest.importorskip("scipy.special")
    x = lambert_grid()
    ours = lambert_w(x)
    theirs = np.real(scipy_special.lambertw(x))
    # scipy yields nan at the float branch point (rounds below -1/e); skip it
    ok = np.isfinite(theirs)
    assert ok.sum() >= x.size - 1
    assert np.max(np.abs(ours[ok] - theirs[ok]) / np.maximum(1.0, np.abs(theirs[ok]))) < 1e-10


# ---------------------------------------------------------------------------
# Confidence weighting (SuperLoss-style wrapper).


def test_superloss_at_tau_is_neutral():
    value, sigma = superloss(0.5, tau=0.5, lam=1.0)
    assert sigma == pytest.approx(1.0, abs=1e-12)
    assert value == pytest.approx(0.0, abs=1e-12)


def test_superloss_downweights_hard_samples():
    _, sigma_easy = superloss(0.1, tau=math.log(2.0))
    _, sigma_hard = superloss(5.0, tau=math.log(2.0))
    assert sigma_hard < 1.0 < sigma_easy


def test_superloss_sigma_non_increasing_in_loss():
    ell = np.linspace(-3.0, 10.0, 300)
    _, sigma = superloss(ell, tau=math.log(2.0), lam=1.0)
    assert np.all(np.diff(sigma) <= 1e-12)


def test_superloss_sigma_stationarity():
    """sigma* minimizes sigma -> (l - tau) * sigma + lam * log(sigma)^2."""
    tau, lam = math.log(2.0), 1.0
    betas = np.linspace(-2.0 / math.e + 1e-2, 12.0, 120)
    for beta in betas:
        ell = tau + lam * float(beta)
        _, sigma = superloss(ell, tau, lam)
        h = 1e-7 * sigma

        def v(s: float) -> float:
            return (ell - tau) * s + lam * math.log(s) ** 2

        derivative = (v(sigma + h) - v(sigma - h)) / (2.0 * h)
        assert abs(derivative) < 1e-6, beta


def test_superloss_envelope_derivative_is_sigma():
    tau, lam = 0.4, 0.8
    for ell in (0.0, 0.3, 0.4001, 1.0, 4.0, 9.0):
        value, sigma = superloss(ell, tau, lam)
        h = 1e-6
        vp, _ = superloss(ell + h, tau, lam)
        vm, _ = superloss(ell - h, tau, lam)
        assert (vp - vm) / (2.0 * h) == pytest.approx(sigma, abs=1e-5)


def test_superloss_negative_below_tau():
    value, sigma = superloss(0.0, tau=math.log(2.0))
    assert value < 0.0 and sigma > 1.0


def test_superloss_rejects_bad_inputs():
    with pytest.raises(ValueError):
        superloss(1.0, tau=0.5, lam=0.0)
    with pytest.raises(ValueError):
        superloss(float("nan"), tau=0.5)


# ---------------------------------------------------------------------------
# Adaptive-margin cosine loss.


def test_curricular_easy_reduction_matches_scaled_cross_entropy():
    """margin = 0, t = 0, all targets dominant: plain CE on scale * cos."""
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = 6
        y = rng.integers(0, 2, size=n)
        cy = rng.uniform(0.3, 0.9, size=n)
        cj = cy - rng.uniform(0.05, 0.2, size=n)  # easy: target strictly dominates
        c = np.zeros((n, 2))
        c[np.arange(n), y] = cy
        c[np.arange(n), 1 - y] = cj
        scale = 8.0
        loss, grad, mean_cy = curricular(c, y, weights=(0.9, 0.1), margin=0.0, scale=scale, t=0.0)
        p = softmax(scale * c)
        ce_loss, ce_grad = cce(p, y, weights=(0.9, 0.1))
        assert np.allclose(loss, ce_loss, atol=1e-12)
        assert np.allclose(grad, scale * ce_grad, atol=1e-12)
        assert mean_cy == pytest.approx(float(np.mean(cy)))


def test_curricular_hard_negative_closed_form():
    """cos_j = 0.8, t = 0.5 -> modified non-target cosine 0.8 * 1.3 = 1.04."""
    margin, scale, t = 0.2, 8.0, 0.5
    cy, cj = 0.2, 0.8
    shifted = cy * math.cos(margin) - math.sqrt(1.0 - cy * cy) * math.sin(margin)
    assert shifted < cj  # hard branch is active
    zy, zj = scale * shifted, scale * (cj * (t + cj))
    expected = math.log(1.0 + math.exp(zj - zy))
    loss, _, _ = curricular(np.array([cy, cj]), 0, weights=(1.0, 1.0), margin=margin, scale=scale, t=t)
    assert loss == pytest.approx(expected, rel=1e-12)
    assert zj == pytest.approx(scale * 1.04, rel=1e-12)


def test_curricular_hard_examples_cost_more():
    cos = np.array([0.2, 0.8])
    easy_map, _, _ = curricular(cos, 0, weights=(1.0, 1.0), t=0.0)
    hard_map, _, _ = curricular(cos, 0, weights=(1.0, 1.0), t=0.9)
    assert hard_map > easy_map  # larger t inflates hard negatives


def test_curricular_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    done = 0
    while done < 20:
        n = 5
        c = rng.uniform(-0.9, 0.9, size=(n, 2))
        y = rng.integers(0, 2, size=n)
        t = float(rng.uniform(0.0, 1.0))
        rows = np.arange(n)
        cy = c[rows, y]
        cj = c[rows, 1 - y]
        shifted = cy * math.cos(0.2) - np.sqrt(1 - cy**2) * math.sin(0.2)
        if np.any(np.abs(shifted - cj) < 1e-3):
            continue  # keep away from the hard/easy boundary
        _, grad, _ = curricular(c, y, t=t)
        fd = fd_grad(lambda: float(np.sum(curricular(c, y, t=t)[0])), c, h=1e-6)
        assert rel_err(grad, fd) < 1e-4
        done += 1


def test_curricular_rejects_out_of_range_cosines():
    with pytest.raises(ValueError):
        curricular(np.array([1.2, 0.0]), 0)
    with pytest.raises(ValueError):
        curricular(np.array([0.5, 0.5]), 0, margin=-0.1)
    with pytest.raises(ValueError):
        curricular(np.array([0.5, 0.5]), 0, scale=0.0)


@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=200))
def test_hardness_state_stays_bounded(means):
    t = 0.0
    for m in means:
        t = update_hardness(t, m, alpha=0.01)
        assert -1.0 <= t <= 1.0


# ---------------------------------------------------------------------------
# Telemetry helpers.


def test_per_class_mean_basic():
    bona, spoof = per_class_mean([1.0, 3.0, 2.0], [0, 0, 1])
    assert bona == pytest.approx(2.0)
    assert spoof == pytest.approx(2.0)


def test_per_class_mean_absent_class_is_none():
    bona, spoof = per_class_mean([1.0, 2.0], [1, 1])
    assert bona is None
    assert spoof == pytest.approx(1.5)


# ---------------------------------------------------------------------------
# Shared properties.


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_probability_losses_are_nonnegative(seed):
    rng = np.random.default_rng(seed)
    z, p, y = random_batch(rng, n=int(rng.integers(1, 10)), span=4.0)
    w = tuple(rng.uniform(0.0, 2.0, 2))
    for fn in (lambda: cce(p, y, w), lambda: focal(p, y, w, gamma=2.0), lambda: gce(p, y, w, q=0.7)):
        loss, _ = fn()
        assert np.all(np.atleast_1d(loss) >= 0.0)


def test_loss_spec_validation():
    assert LossSpec().kind == "cce"
    with pytest.raises(ValueError):
        LossSpec(kind="nope")
    with pytest.raises(ValueError):
        LossSpec(gce_q=0.0)
    with pytest.raises(ValueError):
        LossSpec(class_weights=(0.9,))
    with pytest.raises(ValueError):
        LossSpec(super_tau_mode="sometimes")
    with pytest.raises(ValueError):
        LossSpec(curricular_alpha=0.0)
