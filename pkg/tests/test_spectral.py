import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ouflow.dynamics import initial_condition
from ouflow.spectral import (
    SpectralField,
    VelocityField,
    advect,
    biot_savart,
    convolution_oracle,
    curl,
    derivative,
    forward,
    from_bytes,
    get_grid,
    hermitize,
    inner,
    inverse,
    sobolev_norm,
    to_bytes,
    transform,
)

TWO_PI = 2 * np.pi


def random_field(M, seed, band=True):
    rng = np.random.default_rng(seed)
    f = SpectralField.from_samples(rng.standard_normal((M, M)))
    if band:
        f = SpectralField(f.coeffs * get_grid(M).mask(True))
    return f


def test_cosine_coefficients():
    g = get_grid(8)
    c = forward(np.cos(TWO_PI * g.x1))
    expected = np.zeros_like(c)
    expected[1, 0] = expected[7, 0] = 0.5
    assert np.max(np.abs(c - expected)) < 1e-15


def test_grid_counts():
    g = get_grid(16)
    assert int(g.mask(True).sum()) == 66
    assert int(g.mask(False).sum()) == 120


def test_nyquist_dropped_and_mean_rejected():
    M = 8
    c = np.zeros((M, M // 2 + 1), dtype=complex)
    c[4, 1] = 1.0
    c[1, 4] = 1.0
    assert np.all(SpectralField(c).coeffs == 0)
    c[0, 0] = 0.3
    with pytest.raises(ValueError, match="zero mean"):
        SpectralField(c)
    assert SpectralField.project(c).coeffs[0, 0] == 0


def test_nonfinite_rejected():
    x = np.zeros((8, 8))
    x[2, 3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        forward(x)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([8, 16, 32]), st.integers(0, 2**32 - 1))
def test_round_trip(M, seed):
    f = random_field(M, seed, band=False)
    back = forward(inverse(f.coeffs))
    assert np.max(np.abs(back - f.coeffs)) < 1e-13
    assert np.max(np.abs(transform(transform(f.coeffs, "inverse"), "forward") - f.coeffs)) < 1e-13


def test_transform_rejects_direction():
    with pytest.raises(ValueError):
        transform(np.zeros((8, 8)), "sideways")


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([8, 16, 32, 64]), st.integers(0, 2**32 - 1))
def test_curl_of_biot_savart_is_identity(M, seed):
    f = random_field(M, seed, band=False)
    u = biot_savart(f)
    assert np.max(np.abs(curl(u).coeffs - f.coeffs)) < 1e-12
    assert u.divergence_residual() < 1e-12


def test_biot_savart_of_cosine():
    M = 16
    g = get_grid(M)
    u = biot_savart(SpectralField.from_samples(np.cos(TWO_PI * g.x1))).samples()
    assert np.max(np.abs(u[0])) < 1e-15
    assert np.max(np.abs(u[1] - np.sin(TWO_PI * g.x1) / TWO_PI)) < 1e-15


def test_derivatives():
    M = 16
    g = get_grid(M)
    f = SpectralField.from_samples(np.sin(TWO_PI * (g.x1 + 2 * g.x2)))
    assert np.allclose(derivative(f, "d1").samples(), TWO_PI * np.cos(TWO_PI * (g.x1 + 2 * g.x2)), atol=1e-12)
    assert np.allclose(derivative(f, "d2").samples(), 2 * TWO_PI * np.cos(TWO_PI * (g.x1 + 2 * g.x2)), atol=1e-12)
    assert np.allclose(derivative(f, "lap").samples(), -5 * TWO_PI**2 * f.samples(), atol=1e-10)
    v = derivative(f, "perp")
    assert isinstance(v, VelocityField)
    assert v.divergence_residual() < 1e-25
    with pytest.raises(ValueError):
        derivative(f, "d3")


def test_sobolev_norms_frozen():
    # random12 datum, values computed once and frozen
    f = initial_condition("random12", 32)
    assert sobolev_norm(f, -1.0) == pytest.approx(0.5822037244694974, rel=1e-13)
    assert sobolev_norm(f, 0.0) == pytest.approx(1.0, rel=1e-13)
    assert sobolev_norm(f, 1.0) == pytest.approx(2.1318731384572973, rel=1e-13)
    assert sobolev_norm(f, 2.0) == pytest.approx(5.439887117587203, rel=1e-13)
    assert biot_savart(f).l2_norm() == pytest.approx(0.09266060063583235, rel=1e-13)


def test_sobolev_of_unit_mode_independent_of_s():
    g = get_grid(8)
    f = SpectralField.from_samples(np.cos(TWO_PI * g.x1))
    for s in (-2, -1, 0, 1, 3):
        assert sobolev_norm(f, s) == pytest.approx(np.sqrt(0.5), rel=1e-14)
    assert sobolev_norm(f, 0) == pytest.approx(np.sqrt(np.mean(f.samples() ** 2)), rel=1e-14)


def test_sobolev_raw_array():
    f = random_field(16, 1)
    assert sobolev_norm(f.coeffs, 1.0) == sobolev_norm(f, 1.0)
    c = f.coeffs.copy()
    c[0, 0] = 1.0
    with pytest.raises(ValueError):
        sobolev_norm(c, 1.0)


def test_advect_matches_oracle():
    M = 16
    xi = random_field(M, 11, band=False)
    u = biot_savart(random_field(M, 12, band=False))
    out = advect(u, xi, dealias=True)
    ref = convolution_oracle(band_limited(u), SpectralField(xi.coeffs * get_grid(M).mask(True)))
    assert np.max(np.abs(out.coeffs - ref.coeffs)) < 1e-10


def band_limited(u):
    m = get_grid(u.grid_size).mask(True)
    return VelocityField(SpectralField(u.u1.coeffs * m), SpectralField(u.u2.coeffs * m))


def test_advect_band_limited_inputs_frozen():
    f = initial_condition("random12", 16)
    a = advect(biot_savart(f), f)
    assert a.l2_norm() == pytest.approx(0.6078638616256327, rel=1e-12)
    assert np.max(np.abs(a.coeffs - convolution_oracle(biot_savart(f), f).coeffs)) < 1e-13


def test_advect_conserves_energy():
    M = 32
    xi = random_field(M, 3)
    u = biot_savart(random_field(M, 4))
    assert abs(inner(advect(u, xi), xi)) < 1e-12


def test_advect_grid_mismatch():
    with pytest.raises(ValueError, match="grid mismatch"):
        advect(biot_savart(random_field(8, 0)), random_field(16, 0))


def test_oracle_size_limit():
    f = random_field(64, 0)
    with pytest.raises(ValueError):
        convolution_oracle(biot_savart(f), f)


def test_no_dealias_matches_grid_band_oracle_for_low_modes():
    # inputs confined to |k| <= 2 on a 16 grid: products never alias
    M = 16
    g = get_grid(M)
    low = (np.abs(g.k1) <= 2) & (g.k2 <= 2)
    xi = SpectralField(random_field(M, 5).coeffs * low)
    u = biot_savart(SpectralField(random_field(M, 6).coeffs * low))
    a = advect(u, xi, dealias=False)
    assert np.max(np.abs(a.coeffs - convolution_oracle(u, xi, band="grid").coeffs)) < 1e-13


def test_hermitize_idempotent_on_real_fields():
    f = random_field(16, 8)
    c = f.coeffs.copy()
    hermitize(c)
    assert np.max(np.abs(c - f.coeffs)) < 1e-16
    c[3, 0] += 1j
    hermitize(c)
    assert c[3, 0] == np.conj(c[13, 0])


def test_bytes_round_trip_and_layout():
    f = random_field(8, 9)
    data = to_bytes(f)
    assert struct.unpack("<q", data[:8])[0] == 8
    assert len(data) == 8 + 16 * 64
    full = np.frombuffer(data, dtype="<c16", offset=8).reshape(8, 8)
    assert np.array_equal(full, f.full())
    g = from_bytes(data)
    assert np.array_equal(g.coeffs, f.coeffs)
    with pytest.raises(ValueError):
        from_bytes(data[:-1])


def test_full_lattice_is_hermitian():
    f = random_field(8, 10)
    full = f.full()
    neg = (-np.arange(8)) % 8
    assert np.allclose(full, np.conj(full[neg][:, neg]), atol=1e-15)
    assert np.allclose(np.fft.ifft2(full).imag, 0, atol=1e-15)


def test_sobolev_interpolation_inequality():
    rng = np.random.default_rng(21)
    for _ in range(1000):
        M = int(rng.choice([8, 16, 32]))
        f = SpectralField.from_samples(rng.standard_normal((M, M)))
        s0, s1 = sorted(rng.uniform(-2, 3, size=2))
        th = rng.uniform()
        s = (1 - th) * s0 + th * s1
        assert sobolev_norm(f, s) <= sobolev_norm(f, s0) ** (1 - th) * sobolev_norm(f, s1) ** th * (1 + 1e-12)


def test_oracle_zero_and_single_modes():
    M = 16
    g = get_grid(M)
    assert convolution_oracle(biot_savart(SpectralField.zeros(M)), SpectralField.zeros(M)).l2_norm() == 0
    # u from cos(2 pi x1) is (0, sin(2 pi x1)/(2 pi)); xi = cos(2 pi x2) gives
    # u . grad xi = -sin(2 pi x1) sin(2 pi x2), i.e. modes (1,1) and (1,-1) only
    u = biot_savart(SpectralField.from_samples(np.cos(TWO_PI * g.x1)))
    xi = SpectralField.from_samples(np.cos(TWO_PI * g.x2))
    out = convolution_oracle(u, xi)
    assert np.allclose(out.samples(), -np.sin(TWO_PI * g.x1) * np.sin(TWO_PI * g.x2), atol=1e-15)
    assert sorted(map(tuple, np.argwhere(np.abs(out.full()) > 1e-14).tolist())) == [(1, 1), (1, 15), (15, 1), (15, 15)]
