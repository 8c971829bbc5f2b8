import math

import numpy as np
import pytest

from csbp_genealogy.errors import ContractError
from csbp_genealogy.quadrature import QuadratureSpec, gauss_legendre_pi_k, integrate_pi_k


def test_two_dimensional_gamma_factorial():
    k, y = (2, 1), np.array([1.0, 2.0])
    f = lambda lams: lams[:, 0] ** 2 * lams[:, 1] * np.exp(-(lams @ y))
    r = integrate_pi_k(k, f, QuadratureSpec(scale=(2.0, 0.5)))
    assert r.value == pytest.approx(1.0, rel=1e-10)
    assert r.error < 1e-8


def test_zero_index_is_point_evaluation():
    r = integrate_pi_k((0, 0), lambda lams: 3.0 + lams.sum(axis=1))
    assert r.value == 3.0


def test_mixed_active_coordinates_pin_inactive_ones():
    seen = []

    def f(lams):
        seen.append(lams[:, 1].copy())
        return lams[:, 0] * np.exp(-lams[:, 0])

    r = integrate_pi_k((1, 0), f)
    assert r.value == pytest.approx(1.0, rel=1e-10)
    assert all(np.all(s == 0) for s in seen)


@pytest.mark.parametrize("rule", ["gk21", "gl-doubling"])
def test_rules_agree_in_one_dimension(rule):
    f = lambda lams: (lams[:, 0] * 0.3) ** 3 / 6 * np.exp(-0.3 * lams[:, 0])
    assert integrate_pi_k((3,), f, QuadratureSpec(rule=rule, scale=10.0)).value == pytest.approx(1.0, rel=1e-10)


def test_tensor_rule_weights():
    lams, W = gauss_legendre_pi_k((2,), nodes=64, scale=2.0)
    # pi^2 against lam^2 e^{-lam} / 2 has mass 1
    val = W @ (lams[:, 0] ** 2 * np.exp(-lams[:, 0]) / 2)
    assert val == pytest.approx(1.0, rel=1e-8)


def test_bad_scale():
    with pytest.raises(ContractError):
        integrate_pi_k((1,), lambda l: l[:, 0], QuadratureSpec(scale=-1.0))


@pytest.mark.parametrize("power", [1.0, 3.0, 8.0])
def test_power_map_preserves_integral(power):
    # int 2 dlam/lam * lam^2 e^{-2 lam} = 2 Gamma(2) / 4
    f = lambda lam: lam[:, 0] ** 2 * np.exp(-2.0 * lam[:, 0])
    res = integrate_pi_k((2,), f, QuadratureSpec(power=power))
    assert res.value == pytest.approx(0.5, rel=1e-10)


def test_power_map_handles_slow_tails():
    # int lam^{-1/2} / (1 + lam) dlam = pi; the tail decays like lam^{-3/2}
    f = lambda lam: np.sqrt(lam[:, 0]) / (1.0 + lam[:, 0])
    res = integrate_pi_k((1,), f, QuadratureSpec(power=4.0))
    assert res.value == pytest.approx(np.pi, rel=1e-9)


def test_power_below_one_rejected():
    with pytest.raises(ContractError):
        integrate_pi_k((1,), lambda lam: lam[:, 0], QuadratureSpec(power=0.5))
