import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from trunctail.kernels import (
    KERNELS,
    Kernel,
    biweight_kernel,
    check_kernel,
    get_kernel,
    indicator_kernel,
    tail_kernel_integral,
    triweight_kernel,
)
from trunctail.model import BurrSpec, burr_sf


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_conformance(name):
    for res in check_kernel(get_kernel(name)):
        assert res.passed, f"{name} [{res.condition}] {res.detail}"


def test_indicator_values():
    k = indicator_kernel()
    assert k.k_at(0.5) == 1.0
    assert k.k_at(1.0) == 0.0
    assert k.g_at(0.999) == 1.0
    assert k.k_at(0.0) == 1.0


def test_biweight_values():
    k = biweight_kernel()
    assert k.k_at(0.0) == 1.875
    assert k.g_at(0.0) == 1.875
    assert abs(k.g_at(1 / math.sqrt(5))) < 1e-14
    assert k.k_at(0.5) == pytest.approx(15 / 8 * 0.75**2, abs=1e-15)


def test_triweight_values():
    k = triweight_kernel()
    assert k.k_at(0.0) == 2.1875
    assert k.k_at(1.0) == 0.0
    assert k.k_at(1.0 - 1e-9) < 1e-20


def test_g_matches_closed_forms():
    s = np.linspace(0, 0.999, 500)
    np.testing.assert_allclose(
        biweight_kernel().g_at(s), 15 / 8 * (1 - s**2) * (1 - 5 * s**2), atol=1e-13
    )
    np.testing.assert_allclose(
        triweight_kernel().g_at(s), 35 / 16 * (1 - s**2) ** 2 * (1 - 7 * s**2), atol=1e-13
    )


@pytest.mark.parametrize("name, expected", [("indicator", 1.0), ("biweight", 10 / 7), ("triweight", 700 / 429)])
def test_square_integrals(name, expected):
    k = get_kernel(name)
    val, _ = integrate.quad(lambda s: k.k_at(s) ** 2, 0, 1, epsabs=1e-13, epsrel=1e-12)
    assert abs(val - expected) < 1e-10


def _exact_square_integral(coeffs):
    # rational polynomial integration of K^2 over [0, 1], no floating point
    sq = [Fraction(0)] * (2 * len(coeffs) - 1)
    for i, a in enumerate(coeffs):
        for j, b in enumerate(coeffs):
            sq[i + j] += a * b
    return sum(c / (m + 1) for m, c in enumerate(sq))


def test_square_integral_exact_polynomial():
    bi = [Fraction(15, 8), 0, Fraction(-30, 8), 0, Fraction(15, 8)]
    c = Fraction(35, 16)
    tri = [c, 0, -3 * c, 0, 3 * c, 0, -c]
    assert _exact_square_integral(bi) == Fraction(10, 7)
    # 4900/3003, twice the 2450/3003 sometimes quoted for this kernel
    assert _exact_square_integral(tri) == Fraction(700, 429)


@pytest.mark.parametrize("name, expected", [("indicator", 1.0), ("biweight", 0.0), ("triweight", 0.0)])
def test_g_integral(name, expected):
    k = get_kernel(name)
    val, _ = integrate.quad(k.g_at, 0, 1, epsabs=1e-13)
    assert abs(val - expected) < 1e-8


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_outside_support(name):
    k = get_kernel(name)
    for s in (-2.0, -1e-12, 1.0, 1.5, 10.0):
        assert k.k_at(s) == 0.0
        assert k.g_at(s) == 0.0
        assert k.k_prime_at(s) == 0.0


def test_vectorised_and_scalar_agree():
    k = biweight_kernel()
    s = np.array([0.1, 0.4, 0.9])
    np.testing.assert_array_equal(k.k_at(s), [k.k_at(float(v)) for v in s])
    assert isinstance(k.k_at(0.3), float)


def test_unknown_kernel():
    with pytest.raises(ValueError, match="unknown kernel"):
        get_kernel("epanechnikov")


def _corrupted():
    return Kernel.from_polynomial("half-biweight", [15 / 16, 0, -30 / 16, 0, 15 / 16])


def test_conformance_catches_mass_error():
    failed = {r.condition for r in check_kernel(_corrupted()) if not r.passed}
    assert failed == {"C3"}


def test_conformance_catches_increasing_kernel():
    bad = Kernel.from_polynomial("ramp", [0.0, 2.0])
    failed = {r.condition for r in check_kernel(bad) if not r.passed}
    assert "C1" in failed


def test_conformance_catches_wrong_derivative():
    good = biweight_kernel()
    bad = Kernel("bad-derivative", good.k, lambda s: 0.0 * s, good.g)
    failed = {r.condition for r in check_kernel(bad) if not r.passed}
    assert {"g", "derivative"} <= failed


def test_tail_kernel_integral_tends_to_gamma():
    spec = BurrSpec(0.25, 0.6)
    sf = lambda x: burr_sf(spec, x)
    for kernel in (biweight_kernel(), indicator_kernel()):
        errs = [abs(tail_kernel_integral(sf, kernel, u) - 0.6) for u in (1e2, 1e3, 1e4)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 0.05 * 0.6
