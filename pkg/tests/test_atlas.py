import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankflow.atlas import (AtlasSpec, moment, moment_table, mc_oracle_moment, phi_alpha, psi,
                            tail_cutoff, tau)
from rankflow.equilibrium import sample_ranked_weights_atlas
from rankflow.errors import QuadratureNotConverged


def mp_phi(theta, alpha):
    with mpmath.workdps(30):
        return float(alpha * mpmath.power(theta, alpha) * mpmath.gammainc(-alpha, theta))


def mp_psi(theta, b, alpha):
    with mpmath.workdps(30):
        f = lambda v: mpmath.exp(-theta * (b / ((1 - b) * v + b)) ** (1 / mpmath.mpf(alpha)))
        return float(mpmath.quad(f, [0, b, 10 * b, 1] if b < 0.1 else [0, 1]))


def test_spec_validation():
    assert AtlasSpec(4, 2).alpha == 0.5
    for args in [(1, 1), (3, 0), (3, 4), (3, 1, 0.0)]:
        with pytest.raises(ValueError):
            AtlasSpec(*args)


@pytest.mark.parametrize("theta,alpha", [(1.0, 1.0), (0.3, 0.4), (5.0, 2 / 3), (20.0, 0.1)])
def test_phi_against_incomplete_gamma(theta, alpha):
    assert phi_alpha(theta, alpha) == pytest.approx(mp_phi(theta, alpha), rel=1e-9)


def test_phi_limits_and_monotone():
    assert phi_alpha(0.0, 0.7) == 1.0
    vals = [phi_alpha(t, 0.7) for t in np.linspace(0, 10, 21)]
    assert np.all(np.diff(vals) < 0) and vals[-1] > 0
    with pytest.raises(ValueError):
        phi_alpha(-1.0, 1.0)


def test_phi_monte_carlo():
    w = np.random.default_rng(0).exponential(1.0, 10**7)
    v = np.exp(-np.exp(w))
    assert abs(phi_alpha(1.0, 1.0) - v.mean()) < 3 * v.std() / math.sqrt(v.size)


@pytest.mark.parametrize("theta,b,alpha", [(1.0, 0.5, 1.0), (2.0, 1e-3, 0.4),
                                           (0.5, 1e-8, 2 / 3), (10.0, 0.99, 0.25),
                                           (3.0, 0.2, 0.1)])
def test_psi_against_adaptive_reference(theta, b, alpha):
    assert psi(theta, b, alpha) == pytest.approx(mp_psi(theta, b, alpha), rel=1e-10)


def test_psi_limits():
    assert psi(0.0, 0.3, 0.5) == pytest.approx(1.0, rel=1e-14)
    assert psi(2.0, 1 - 1e-9, 0.5) == pytest.approx(math.exp(-2.0), rel=1e-7)
    assert psi(2.0, 1e-300, 0.5) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        psi(1.0, 0.0, 0.5)
    np.testing.assert_allclose(psi(1.0, np.array([0.2, 0.7]), 0.5),
                               [psi(1.0, 0.2, 0.5), psi(1.0, 0.7, 0.5)], rtol=1e-15)


def test_psi_monte_carlo():
    v = np.random.default_rng(1).random(10**6)
    f = np.exp(-1.5 * (0.3 / (0.7 * v + 0.3)) ** 2.0)
    assert abs(psi(1.5, 0.3, 0.5) - f.mean()) < 3 * f.std() / 1000


@given(st.floats(0, 20), st.floats(0.01, 0.99), st.floats(0.05, 3))
@settings(max_examples=50)
def test_psi_between_limits(theta, b, alpha):
    val = float(psi(theta, b, alpha))
    assert math.exp(-theta) * (1 - 1e-12) <= val <= 1 + 1e-12


def test_tau_at_zero_and_decreasing():
    spec = AtlasSpec(4, 2)
    assert tau(0.0, spec) == 1.0
    vals = [tau(t, spec) for t in (0.5, 1, 2, 4, 8)]
    assert np.all(np.diff(vals) < 0)
    assert all(v <= math.exp(-t) for v, t in zip(vals, (0.5, 1, 2, 4, 8)))
    with pytest.raises(ValueError):
        tau(-0.1, spec)


@pytest.mark.parametrize("n,k,theta", [(3, 1, 1.0), (3, 2, 2.0), (4, 4, 0.5), (2, 1, 1.0)])
def test_tau_monte_carlo(n, k, theta):
    w = sample_ranked_weights_atlas(n, 1.0, np.random.default_rng(n * 10 + k), size=10**6)
    v = np.exp(-theta / w[:, k - 1])
    assert abs(tau(theta, AtlasSpec(n, k)) - v.mean()) < 3 * v.std() / 1000 + 1e-9


def test_tau_integral_two_particles():
    # the top weight of the two-particle model has mean log 2
    val = mpmath.quad(lambda t: tau(float(t), AtlasSpec(2, 2)), [0, 1, 5, 40])
    assert float(val) == pytest.approx(math.log(2), abs=1e-8)


def test_tail_cutoff():
    from scipy import special

    for r in (1, 2, 3):
        c = tail_cutoff(r)
        assert special.gammaincc(r, c) < 1e-8 <= special.gammaincc(r, c * (1 - 1e-9))
    assert tail_cutoff(1) == pytest.approx(-math.log(1e-8), rel=1e-12)


def test_moment_two_particles():
    assert moment(AtlasSpec(2, 2), 1) == pytest.approx(math.log(2), abs=1e-8)
    assert moment(AtlasSpec(2, 1), 1) == pytest.approx(1 - math.log(2), abs=1e-8)


@pytest.mark.parametrize("n", [3, 5])
def test_first_moments_sum_to_one(n):
    total = sum(moment(AtlasSpec(n, k), 1) for k in range(1, n + 1))
    assert total == pytest.approx(1.0, abs=1e-5)


def test_moments_increase_in_rank_and_satisfy_jensen():
    m1 = [moment(AtlasSpec(4, k), 1) for k in range(1, 5)]
    m2 = [moment(AtlasSpec(4, k), 2) for k in range(1, 5)]
    assert np.all(np.diff(m1) > 0) and np.all(np.diff(m2) > 0)
    assert all(b >= a * a for a, b in zip(m1, m2))


@pytest.mark.parametrize("k,r", [(1, 1), (3, 2), (5, 1), (5, 3)])
def test_moment_against_monte_carlo(k, r):
    spec = AtlasSpec(5, k)
    mc, se = mc_oracle_moment(spec, r, 10**6, np.random.default_rng([k, r]))
    assert abs(moment(spec, r) - mc) < 3 * se


def test_moment_invalid_order():
    for r in (0, 1.5, -2):
        with pytest.raises(ValueError):
            moment(AtlasSpec(3, 1), r)


def test_moment_failure_is_reported(monkeypatch):
    import rankflow.atlas as atlas

    monkeypatch.setattr(atlas, "tau", lambda t, spec: math.sin(1 / (t + 1e-12)) / (t + 1e-12))
    with pytest.raises(QuadratureNotConverged):
        atlas.moment(AtlasSpec(3, 1), 1)


def test_mc_oracle():
    spec = AtlasSpec(3, 3)
    a = mc_oracle_moment(spec, 1, 1000, np.random.default_rng(5), chunk=300)
    b = mc_oracle_moment(spec, 1, 1000, np.random.default_rng(5), chunk=1000)
    assert a == pytest.approx(b, rel=1e-12)
    assert a[1] > 0
    with pytest.raises(ValueError):
        mc_oracle_moment(spec, 1, 0)


def test_moment_table_rows(tmp_path):
    rows = moment_table(3, 1.0, [1, 3], [1], n_draws=0)
    assert [r[:4] for r in rows] == [(3, 1, 1.0, 1), (3, 3, 1.0, 1)]
    assert all(math.isnan(r[5]) and math.isnan(r[6]) for r in rows)
    rows = moment_table(3, 1.0, [2], [2], n_draws=20_000, seed=3)
    assert abs(rows[0][4] - rows[0][5]) < 4 * rows[0][6]


def test_delta_scales_alpha():
    # larger drift concentrates mass away from the top rank
    assert moment(AtlasSpec(3, 3, 2.0), 1) < moment(AtlasSpec(3, 3, 1.0), 1)
