import numpy as np
import pytest
from scipy import integrate, stats

from cntlab.errors import ConfigError, DomainError, ValidationError
from cntlab.noise import (
    NoiseSchedule,
    beta,
    beta_integral,
    corrupt,
    marginal_params,
    sample_laplace,
    sample_time,
)


def laplace_cdf(x):
    return np.where(x < 0, 0.5 * np.exp(x), 1.0 - 0.5 * np.exp(-x))


# ----------------------------------------------------------------------
# schedule and closed forms


def test_beta_endpoints_and_linearity():
    s = NoiseSchedule()
    assert beta(s, 0.0) == 0.2
    assert beta(s, 1.0) == 20.0
    assert abs(beta(s, 0.5) - 10.1) < 1e-12
    ts = np.linspace(0, 1, 7)
    assert np.allclose(beta(s, ts), 0.2 + ts * 19.8)


def test_beta_integral_matches_quadrature():
    s = NoiseSchedule()
    for t in (0.1, 0.25, 0.5, 0.77, 1.0):
        ref, err = integrate.quad(lambda u: beta(s, u), 0.0, t)
        assert abs(beta_integral(s, t) - ref) < max(1e-10, 10 * err)


def test_marginal_frozen_values():
    # hand-computed from B(t) = 0.2 t + 9.9 t^2
    s = NoiseSchedule()
    mc1, sp1 = marginal_params(s, 1.0)
    assert abs(mc1 - 0.006409333446256383) < 1e-14
    assert abs(sp1 - 0.9999794600114418) < 1e-14
    mc5, sp5 = marginal_params(s, 0.5)
    assert abs(mc5 - 0.2759598209859731) < 1e-14
    assert abs(sp5 - 0.9611691719990763) < 1e-14


def test_marginal_variance_preserving():
    s = NoiseSchedule()
    ts = np.linspace(0.0, 1.0, 101)
    mc, sp = marginal_params(s, ts)
    assert np.allclose(mc * mc + sp * sp, 1.0, atol=1e-12)


def test_marginal_monotone():
    s = NoiseSchedule()
    ts = np.linspace(0.0, 1.0, 101)
    mc, sp = marginal_params(s, ts)
    assert np.all(np.diff(mc) < 0)
    assert np.all(np.diff(sp) > 0)


def test_marginal_at_zero_is_identity():
    mc, sp = marginal_params(NoiseSchedule(), 0.0)
    assert mc == 1.0
    assert sp == 0.0


def test_only_noise_pins_beta_min():
    s = NoiseSchedule(mode="only-noise")
    assert s.beta_min == s.beta_max == 20.0
    ts = np.linspace(0.0, 1.0, 11)
    mc, _ = marginal_params(s, ts)
    # constant rate gives mean_coeff exp(-beta_max t / 2) = exp(-10 t)
    assert np.allclose(mc, np.exp(-10.0 * ts), atol=1e-14)


def test_only_noise_signal_floor_threshold():
    # exp(-10 t) drops below 1e-2 at t = ln(100)/10 ~ 0.4605
    s = NoiseSchedule(mode="only-noise")
    assert marginal_params(s, 0.46)[0] > 1e-2
    assert marginal_params(s, 0.461)[0] < 1e-2


# ----------------------------------------------------------------------
# sampling


def test_laplace_moments_and_distribution():
    rng = np.random.default_rng(7)
    x = sample_laplace(rng, 200_000)
    assert abs(x.mean()) < 0.01
    assert abs(x.std() - np.sqrt(2.0)) < 0.01
    d, p = stats.kstest(x[:20_000], laplace_cdf)
    assert p > 0.01


def test_corrupt_gaussian_moments():
    s = NoiseSchedule()
    rng = np.random.default_rng(11)
    y = np.full(200_000, 1.5)
    out = corrupt(y[:, None], np.full(200_000, 0.5), s, rng)
    mc, sp = marginal_params(s, 0.5)
    draws = out.y_noisy[:, 0]
    assert abs(draws.mean() - mc * 1.5) < 0.01
    assert abs(draws.std() - sp) < 0.01


def test_corrupt_laplace_scale():
    s = NoiseSchedule(family="laplace")
    rng = np.random.default_rng(13)
    y = np.zeros((200_000, 1))
    out = corrupt(y, np.full(200_000, 0.5), s, rng)
    _, sp = marginal_params(s, 0.5)
    # spread is the Laplace scale, so the std is sqrt(2) times it
    assert abs(out.y_noisy.std() - np.sqrt(2.0) * sp) < 0.01


def test_corrupt_at_zero_returns_clean():
    rng = np.random.default_rng(3)
    y = rng.normal(size=(8,))
    out = corrupt(y, 0.0, NoiseSchedule(), rng)
    assert np.array_equal(out.y_noisy, y)
    assert np.array_equal(out.y_clean, y)
    assert out.t == 0.0


def test_corrupt_rowwise_times():
    rng = np.random.default_rng(5)
    y = np.ones((3, 4))
    t = np.array([0.0, 0.5, 1.0])
    out = corrupt(y, t, NoiseSchedule(), rng)
    assert out.y_noisy.shape == (3, 4)
    assert np.array_equal(out.y_noisy[0], y[0])  # t=0 row untouched
    assert np.array_equal(out.t, t)


def test_corrupt_deterministic_under_seed():
    y = np.linspace(-1, 1, 6).reshape(2, 3)
    t = np.array([0.3, 0.9])
    a = corrupt(y, t, NoiseSchedule(), np.random.default_rng(42))
    b = corrupt(y, t, NoiseSchedule(), np.random.default_rng(42))
    assert np.array_equal(a.y_noisy, b.y_noisy)


def test_sample_time_modes():
    rng = np.random.default_rng(17)
    ts = sample_time(rng, "train", 20_000)
    assert ts.min() >= 0.0 and ts.max() <= 1.0
    d, p = stats.kstest(ts, "uniform")
    assert p > 0.01
    assert sample_time(rng, "inference") == 1.0
    assert np.array_equal(sample_time(rng, "inference", 5), np.ones(5))
    with pytest.raises(ConfigError):
        sample_time(rng, "test")


# ----------------------------------------------------------------------
# validation


def test_schedule_config_errors():
    with pytest.raises(ConfigError):
        NoiseSchedule(family="cauchy")
    with pytest.raises(ConfigError):
        NoiseSchedule(mode="noisy")
    with pytest.raises(ConfigError):
        NoiseSchedule(beta_min=-0.1)
    with pytest.raises(ConfigError):
        NoiseSchedule(beta_min=5.0, beta_max=1.0)
    with pytest.raises(ConfigError):
        NoiseSchedule(beta_max=float("inf"))


def test_time_domain_errors():
    s = NoiseSchedule()
    rng = np.random.default_rng(0)
    with pytest.raises(DomainError):
        beta(s, -0.01)
    with pytest.raises(DomainError):
        beta_integral(s, 1.01)
    with pytest.raises(DomainError):
        corrupt(np.ones(3), 1.5, s, rng)


def test_corrupt_validation_errors():
    s = NoiseSchedule()
    rng = np.random.default_rng(0)
    with pytest.raises(ValidationError):
        corrupt(np.array([1.0, np.nan]), 0.5, s, rng)
    with pytest.raises(ValidationError):
        corrupt(np.ones((4, 2)), np.full(3, 0.5), s, rng)  # N mismatch
    with pytest.raises(ValidationError):
        corrupt(np.ones(4), np.full(4, 0.5), s, rng)  # (d,) with vector t
    with pytest.raises(ValidationError):
        corrupt(np.ones((4, 2)), 0.5, s, rng)  # batch needs vector t
