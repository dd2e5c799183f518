import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from felogit.moments import (
    MomentDomainError,
    MomentVector,
    chebyshev_pstar,
    dirac_moments,
    extremal_moments,
    hankel_determinants,
    is_member,
    lp_oracle_extremal,
    project_moments,
)


def mixture(rng, T, max_atoms=5):
    k = rng.integers(1, max_atoms + 1)
    atoms = rng.uniform(size=k)
    w = rng.dirichlet(np.ones(k))
    return (w[None, :] * atoms[None, :] ** np.arange(T + 1)[:, None]).sum(axis=1), atoms


def test_hankel_hand_example():
    d = hankel_determinants([1, 0.5, 0.3])
    np.testing.assert_allclose(d.lower_dets, [0.5, 0.05])
    np.testing.assert_allclose(d.upper_dets, [0.5, 0.2])
    assert d.member and d.first_boundary is None


def test_hankel_dirac_boundary():
    d = hankel_determinants([1, 0.5, 0.25])
    assert d.member and d.first_boundary == 2 and d.boundary_kind == "lower"
    assert d.lower_dets[1] == pytest.approx(0.0, abs=1e-15)


def test_hankel_not_member():
    d = hankel_determinants([1, 0.5, 0.6])
    assert not d.member
    assert d.upper_dets[1] == pytest.approx(-0.1)


def test_moment_vector_validation():
    with pytest.raises(ValueError):
        MomentVector(np.array([0.9, 0.5]))
    assert MomentVector(np.array([1.0, 0.2, 0.1])).T == 2


@pytest.mark.parametrize(
    "m, expected",
    [([1, 0.5], (0.25, 0.5)), ([1, 0.5, 0.3], (0.18, 0.22)), ([1, 0.5, 0.25], (0.125, 0.125))],
)
def test_extremal_examples(m, expected):
    ex = extremal_moments(m)
    assert (ex.q_lower, ex.q_upper) == pytest.approx(expected, abs=1e-12)


def test_extremal_rejects_outside():
    with pytest.raises(MomentDomainError):
        extremal_moments([1, 0.5, 0.6])


@pytest.mark.parametrize("m, expected", [([1, 0.5], (0.25, 0.5)), ([1, 0.5, 0.3], (0.18, 0.22))])
def test_lp_oracle_examples(m, expected):
    assert lp_oracle_extremal(m, 10_001) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("T", [1, 2, 3, 4, 5])
def test_lp_oracle_agreement(T):
    rng = np.random.default_rng(100 + T)
    for _ in range(25):
        m, atoms = mixture(rng, T)
        ex = extremal_moments(m)
        lo, up = lp_oracle_extremal(m, 10_001, extra_points=atoms)
        assert abs(ex.q_lower - lo) <= 1e-4 and abs(ex.q_upper - up) <= 1e-4


@pytest.mark.parametrize("T", [1, 2, 3, 4, 5])
def test_mixtures_are_members_and_gap_bounded(T):
    rng = np.random.default_rng(T)
    M = np.array([mixture(rng, T)[0] for _ in range(10_000)])
    assert np.all(is_member(M))
    ex = extremal_moments(M)
    assert np.all(ex.q_upper - ex.q_lower <= 4.0**-T + 1e-12)
    assert np.all(ex.q_lower <= ex.q_upper)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31), st.booleans())
def test_appended_extremal_is_boundary(T, seed, lower):
    m, _ = mixture(np.random.default_rng(seed), T)
    ex = extremal_moments(m)
    ext = np.append(m, ex.q_lower if lower else ex.q_upper)
    d = hankel_determinants(ext, tol=1e-9)
    assert d.member
    assert d.first_boundary is not None and d.first_boundary <= T + 1


def test_dirac_moments_are_boundary():
    m = dirac_moments(0.3, 4)
    np.testing.assert_allclose(m, 0.3 ** np.arange(5))
    ex = extremal_moments(m)
    assert ex.boundary and ex.q_lower == pytest.approx(0.3**5, abs=1e-12)


def test_projection_deep_interior_unchanged():
    m = np.array([1.0, 0.5, 1 / 3])  # uniform law
    pr = project_moments(m, 10**12)
    np.testing.assert_allclose(pr.m_hat, m)
    assert pr.I_hat == 2


def test_projection_below_jensen():
    pr = project_moments([1.0, 0.5, 0.2], 1000)
    np.testing.assert_allclose(pr.m_hat, [1.0, 0.5, 0.25], atol=1e-12)
    assert pr.I_hat == 1


def test_projection_recovers_degenerate_law():
    rng = np.random.default_rng(3)
    u = 0.37
    noisy = u ** np.arange(4) + np.r_[0.0, rng.normal(scale=1e-3, size=3)]
    pr = project_moments(noisy, 10**6)
    np.testing.assert_allclose(pr.m_hat, u ** np.arange(4), atol=1e-2)
    assert is_member(pr.m_hat)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31), st.sampled_from(["constant", "none"]),
       st.integers(10, 10**6))
def test_projection_idempotent(T, seed, rule, n):
    rng = np.random.default_rng(seed)
    m, _ = mixture(rng, T)
    raw = m + np.r_[0.0, rng.normal(scale=0.02, size=T)]
    first = project_moments(raw, n, rule=rule)
    assert is_member(first.m_hat, tol=1e-9)
    second = project_moments(first.m_hat, n, rule=rule)
    np.testing.assert_allclose(second.m_hat, first.m_hat, atol=1e-10)


def test_projection_variance_rule_idempotent():
    rng = np.random.default_rng(4)
    for _ in range(50):
        T = int(rng.integers(1, 5))
        m, _ = mixture(rng, T)
        raw = m + np.r_[0.0, rng.normal(scale=0.01, size=T)]
        sl, su = rng.uniform(1e-4, 1e-2, size=(2, T))
        first = project_moments(raw, 500, sl, su)
        second = project_moments(first.m_hat, 500, sl, su)
        np.testing.assert_allclose(second.m_hat, first.m_hat, atol=1e-10)


def test_chebyshev_examples():
    c1 = chebyshev_pstar(1)
    np.testing.assert_allclose(c1.b, [-0.125, 1.0], atol=1e-14)
    c2 = chebyshev_pstar(2)
    np.testing.assert_allclose(c2.b, [0.03125, -0.5625, 1.5], atol=1e-14)
    assert c2.sup_err == 1 / 32


@pytest.mark.parametrize("T", range(1, 11))
def test_chebyshev_sup_norm(T):
    ch = chebyshev_pstar(T)
    u = np.union1d(np.linspace(0, 1, 20001), np.r_[ch.extrema_plus, ch.extrema_minus])
    assert abs(np.abs(ch.residual(u)).max() - 1 / (2 * 4**T)) <= 1e-10
    np.testing.assert_allclose(ch.residual(ch.extrema_plus), ch.sup_err, atol=1e-10)
    np.testing.assert_allclose(ch.residual(ch.extrema_minus), -ch.sup_err, atol=1e-10)


@pytest.mark.parametrize("T", [1, 2, 3, 4, 5])
def test_monic_minimality(T):
    rng = np.random.default_rng(T)
    u = np.linspace(0, 1, 4001)
    V = np.vander(u, T + 1, increasing=True)
    for _ in range(100):
        coef = rng.normal(size=T + 1) * rng.uniform(0.01, 3)
        coef += chebyshev_pstar(T).b * rng.integers(0, 2)
        assert np.abs(u ** (T + 1) - V @ coef).max() >= 1 / (2 * 4**T) - 1e-10
