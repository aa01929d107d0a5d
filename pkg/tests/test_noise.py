import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ouflow.noise import (
    BAssembler,
    OUEnsemble,
    assemble_b,
    b_moment_check,
    b_pointwise_covariance,
    in_half_lattice,
    isotropy_identity_check,
    make_theta,
    ou_autocovariance,
    ou_init_stationary,
    ou_step,
    ou_variance,
    theta_from_config,
    theta_stats,
)
from ouflow.spectral import get_grid, sobolev_norm


def test_lowpass_unit_ring():
    th = make_theta("lowpass", 0.5, 1, 8)
    assert sorted(map(tuple, th.modes.tolist())) == [(-1, 0), (0, -1), (0, 1), (1, 0)]
    assert np.allclose(th.values, 0.5, atol=1e-16)
    assert th.l_inf == pytest.approx(0.5, abs=1e-16)


def test_frozen_theta_values():
    th = make_theta("lowpass", 0.5, 8, 64)
    assert len(th.modes) == 196
    assert th.l_inf == pytest.approx(0.14768602126136532, rel=1e-14)
    assert theta_stats(th, 1.0, 2.0).C == pytest.approx(22.688462559486112, rel=1e-13)
    assert theta_stats(th, 0.0, 2.0, 1.0).D == pytest.approx(4281.667406376849, rel=1e-13)
    sh = make_theta("shell", 1.0, 4, 64)
    assert len(sh.modes) == 152
    assert sh.l_inf == pytest.approx(0.11624906155625976, rel=1e-14)


@pytest.mark.parametrize("family,a,N", [("lowpass", 0.3, 4), ("lowpass", 0.9, 16), ("shell", 2.0, 3)])
def test_theta_normalized_and_radial(family, a, N):
    th = make_theta(family, a, N, 64)
    assert abs(th.l2 - 1.0) <= 1e-15
    r2 = np.sum(th.modes**2, axis=1)
    for v in np.unique(r2):
        assert np.ptp(th.values[r2 == v]) == 0
    lo, hi = (1, N) if family == "lowpass" else (N, 2 * N)
    assert np.all((r2 >= lo * lo) & (r2 <= hi * hi))


def test_theta_rejections():
    with pytest.raises(ValueError, match="2/3 band"):
        make_theta("lowpass", 0.5, 6, 16)
    with pytest.raises(ValueError):
        make_theta("lowpass", 1.0, 4, 64)
    with pytest.raises(ValueError):
        make_theta("shell", 0.0, 4, 64)
    with pytest.raises(ValueError):
        make_theta("gauss", 0.5, 4, 64)
    with pytest.raises(ValueError, match="empty"):
        make_theta("explicit", explicit=[(1, 0, 0.0)], M=16)
    with pytest.raises(ValueError, match="radial"):
        make_theta("explicit", explicit=[(1, 0, 1.0), (0, 1, 1.0)], M=16)


def test_explicit_theta_rescaled():
    ring = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    th = make_theta("explicit", explicit=[(k1, k2, 3.0) for k1, k2 in ring], M=16)
    assert np.allclose(th.values, 0.5)
    assert theta_from_config({"family": "explicit", "explicit": [[k1, k2, 1.0] for k1, k2 in ring]}, 16).l_inf == pytest.approx(0.5)


def test_lowpass_linf_asymptotics():
    a = 0.5
    ratios = []
    for N in (8, 16, 32, 64):
        th = make_theta("lowpass", a, N, 200)
        approx = math.sqrt((1 - a) / math.pi) / math.sqrt(N ** (2 - 2 * a) - 1)
        ratios.append(th.l_inf / approx)
    assert all(x > y for x, y in zip([make_theta("lowpass", a, N, 200).l_inf for N in (8, 16, 32)], [make_theta("lowpass", a, N, 200).l_inf for N in (16, 32, 64)]))
    assert abs(ratios[-1] - 1) < abs(ratios[0] - 1)
    assert abs(ratios[-1] - 1) < 0.1


def test_theta_stats_unit_ring():
    th = make_theta("lowpass", 0.5, 1, 8)
    for tau in (0.0, 1.0, 2.5):
        for p in (1, 2, 4):
            assert theta_stats(th, tau, p).C == pytest.approx(1.0, abs=1e-15)
    assert theta_stats(th, 1.0, 2, gamma=0.3).D == pytest.approx(4.0, abs=1e-14)


def test_C_over_N2_converges():
    vals = [theta_stats(make_theta("lowpass", 0.5, N, 200), 1.0, 2.0).C / N**2 for N in (8, 16, 32, 64)]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1])


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([1, 2, 3, 4]), st.floats(0.1, 3.0), st.sampled_from([("lowpass", 0.5, 6), ("shell", 1.0, 3)]))
def test_jensen(n, tau, fam):
    th = make_theta(fam[0], fam[1], fam[2], 64)
    p = 4.0
    assert theta_stats(th, tau, p / n).C <= theta_stats(th, tau, p).C ** (1 / n) * (1 + 1e-12)


@pytest.mark.parametrize("family,a,N", [("lowpass", a, N) for a in (0.3, 0.5, 0.9) for N in (1, 4, 8, 16)] + [("shell", a, N) for a in (0.5, 1.0, 2.0) for N in (2, 4, 8)])
def test_isotropy_identity(family, a, N):
    S = isotropy_identity_check(make_theta(family, a, N, 64))
    assert np.max(np.abs(S - 0.5 * np.eye(2))) <= 1e-12


def test_isotropy_unit_ring_exact():
    assert np.array_equal(isotropy_identity_check(make_theta("lowpass", 0.5, 1, 8)), 0.5 * np.eye(2))


def test_half_lattice():
    assert in_half_lattice(1, -3) and in_half_lattice(0, 2)
    assert not in_half_lattice(0, -2) and not in_half_lattice(-1, 5) and not in_half_lattice(0, 0)


def test_ou_frozen_draws():
    modes = make_theta("lowpass", 0.5, 1, 8).half()[0]
    ens = OUEnsemble(modes, 100.0, 7)
    assert ens.eta().tolist() == [[1.053500244864878, 9.787939072768808], [-4.352791184956407, 8.446819856260682]]
    ens.step(0.01)
    assert ens.eta().tolist() == [[-3.808884872133722, 10.717528052656537], [-1.3809769594727477, -0.7337882008799417]]


def test_ou_determinism_and_replicas():
    modes = make_theta("lowpass", 0.5, 4, 64).half()[0]
    a, b = OUEnsemble(modes, 50.0, 3), OUEnsemble(modes, 50.0, 3)
    c = OUEnsemble(modes, 50.0, 3, replica=1)
    for _ in range(5):
        a.step(1e-3), b.step(1e-3), c.step(1e-3)
    assert np.array_equal(a.state, b.state)
    assert not np.allclose(a.state, c.state)


def test_ou_zero_step_noop_and_validation():
    ens = ou_init_stationary(np.array([[1, 0]]), 10.0, 1)
    s = ens.state.copy()
    ou_step(ens, 0.0)
    assert np.array_equal(ens.state, s)
    with pytest.raises(ValueError):
        ens.step(-1.0)
    with pytest.raises(ValueError):
        OUEnsemble(np.array([[1, 0]]), 1.0, 0)


def test_stationary_variance_mean_and_independence():
    v = ou_variance(100.0, 100_000, seed=0)
    assert 49 <= v.variance <= 51
    assert abs(v.mean) <= 3 * math.sqrt(50 / v.samples)
    ens = OUEnsemble(np.array([[1, 0]]), 100.0, 0, n_paths=50_000)
    x = ens.state[:, 0, 0]
    y = ens.state[:, 0, 1]
    assert abs(np.corrcoef(x, y)[0, 1]) <= 3 / math.sqrt(x.size)


def test_long_step_forgets_state():
    ens = OUEnsemble(np.array([[1, 0]]), 100.0, 5, n_paths=50_000)
    ens.state[:] = 40.0
    ens.step(100 / 100.0)
    x = ens.state.ravel()
    assert abs(np.var(x) - 50) <= 3 * 50 * math.sqrt(2 / x.size)
    assert abs(np.mean(x)) <= 3 * math.sqrt(50 / x.size)


def test_autocovariance():
    r = ou_autocovariance(100.0, 10_000, seed=0)
    assert r.max_rel_error <= 0.05
    assert r.fitted_rate() == pytest.approx(100.0, rel=0.02)
    with pytest.raises(ValueError):
        ou_autocovariance(100.0, 11)


def test_b_single_mode_hand_value():
    th = make_theta("lowpass", 0.5, 1, 16)
    ens = OUEnsemble(th.half()[0], 100.0, 0)
    modes = [tuple(m) for m in ens.modes.tolist()]
    ens.state[:] = 0.0
    ens.state[0, modes.index((1, 0)), 0] = 1.0
    b = assemble_b(th, ens, 1.0).samples()
    g = get_grid(16)
    assert np.max(np.abs(b[0])) < 1e-15
    assert np.max(np.abs(b[1] + math.sqrt(2) * np.cos(2 * np.pi * g.x1))) < 1e-14
    assert assemble_b(th, ens, 1.0).l2_norm() == pytest.approx(1.0, rel=1e-14)


def test_b_zero_and_divergence_free():
    th = make_theta("lowpass", 0.5, 4, 32)
    ens = OUEnsemble(th.half()[0], 100.0, 2)
    b = assemble_b(th, ens, 2.0)
    assert b.divergence_residual() < 1e-12
    samples = np.fft.ifft2(b.u1.full()).imag
    assert np.max(np.abs(samples)) <= 1e-13
    ens.state[:] = 0
    assert assemble_b(th, ens, 2.0).l2_norm() == 0


def test_b_mode_mismatch():
    th = make_theta("lowpass", 0.5, 4, 32)
    ens = OUEnsemble(make_theta("lowpass", 0.5, 2, 32).half()[0], 100.0, 2)
    with pytest.raises(ValueError):
        assemble_b(th, ens, 1.0)


def test_add_into_matches_coeffs():
    th = make_theta("shell", 1.0, 3, 32)
    asm = BAssembler(th, 3.0)
    ens = OUEnsemble(th.half()[0], 80.0, 4)
    b1, b2 = asm.coeffs(ens.eta())
    u1 = np.zeros_like(b1)
    u2 = np.zeros_like(b2)
    asm.add_into(ens.eta(), u1, u2)
    assert np.array_equal(u1, b1) and np.array_equal(u2, b2)


def test_second_moment_identity():
    th = make_theta("lowpass", 0.5, 1, 16)
    r = b_moment_check(th, 100.0, 1.0, 1.0, 2, samples=4000, seed=0)
    assert r.exact == pytest.approx(200.0)
    assert abs(r.zscore) <= 3
    r2 = b_moment_check(th, 100.0, 2.0, 1.0, 2, samples=4000, seed=0)
    assert r2.mean / r.mean == pytest.approx(2.0, rel=1e-12)  # same draws, b scales as sqrt(nu)


def test_second_moment_other_theta():
    th = make_theta("lowpass", 0.5, 4, 32)
    r = b_moment_check(th, 50.0, 4.0, 1.0, 2, samples=4000, seed=1)
    assert r.exact == pytest.approx(2 * 4.0 * 50.0 * theta_stats(th, 1.0, 2).C)
    assert abs(r.zscore) <= 3
    one = sobolev_norm(assemble_b(th, OUEnsemble(th.half()[0], 50.0, 1), 4.0), 1.0)
    assert one > 0


def test_fourth_moment_ratio_uniform_in_alpha():
    th = make_theta("lowpass", 0.5, 1, 16)
    ratios = [b_moment_check(th, a, 1.0, 1.0, 4, samples=4000, seed=3).ratio for a in (50.0, 100.0, 200.0)]
    assert max(ratios) / min(ratios) < 1.1


def test_sup_in_time_block():
    th = make_theta("lowpass", 0.5, 1, 16)
    r = b_moment_check(th, 100.0, 1.0, 0.0, 2, samples=1000, seed=3, sup_T=0.5, sup_steps=50)
    assert r.sup_time["mean"] >= r.mean
    assert 0 < r.sup_time["ratio"] < 10


def test_moment_check_validation():
    th = make_theta("lowpass", 0.5, 1, 16)
    with pytest.raises(ValueError):
        b_moment_check(th, 100.0, 1.0, 1.0, 3)
    with pytest.raises(ValueError):
        b_moment_check(th, 100.0, 1.0, 1.0, 2, samples=10)


def test_pointwise_covariance():
    cov = b_pointwise_covariance(make_theta("lowpass", 0.5, 1, 16), 50.0, 4.0, samples=10_000, seed=0)
    assert np.max(np.abs(cov - 200.0 * np.eye(2))) / 200.0 <= 0.05
