import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diracmech import autodiff as ad
from diracmech import systems
from diracmech.errors import DomainError, ShapeError

finite = st.floats(-2.0, 2.0, allow_nan=False)


def central_difference(f, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


class TestGradScalar:
    def test_polynomial(self):
        g = ad.grad_scalar(lambda x: x[0] ** 2 * x[1], [2.0, 3.0])
        np.testing.assert_allclose(g, [12.0, 4.0], rtol=0, atol=1e-14)

    def test_constant_has_zero_gradient(self):
        g = ad.grad_scalar(lambda x: 5.0 + 0.0 * x[0], [0.3, -1.0, 2.0])
        np.testing.assert_array_equal(g, np.zeros(3))

    def test_batch_axes(self):
        x = np.array([[2.0, 3.0], [1.0, -1.0]])
        g = ad.grad_scalar(lambda c: c[0] ** 2 * c[1], x)
        np.testing.assert_allclose(g, [[12.0, 4.0], [-2.0, 1.0]])

    def test_roller_racer_lagrangian_matches_finite_differences(self):
        L = systems.roller_racer().L
        rng = np.random.default_rng(0)
        for _ in range(100):
            z = np.concatenate([rng.normal(size=3), [rng.uniform(0.3, 2.8)], rng.normal(size=4)])
            g = ad.grad_scalar(lambda c: L.func(c[:4], c[4:]), z)
            fd = central_difference(lambda y: L(y[:4], y[4:]), z)
            scale = max(1.0, np.abs(g).max())
            assert np.abs(g - fd).max() / scale < 1e-6

    def test_non_finite_reports_index(self):
        with pytest.raises(DomainError) as info:
            with np.errstate(all="ignore"):
                ad.grad_scalar(lambda x: ad.log(x[0]) + x[1], [[1.0, 0.0], [-1.0, 0.0]])
        assert info.value.index[0] == 1


class TestJacobianCovector:
    def test_index_order(self):
        J = ad.jacobian_covector(lambda x: [x[1], 0.0 * x[0]], [0.7, -0.2])
        np.testing.assert_array_equal(J, [[0.0, 0.0], [1.0, 0.0]])

    def test_exact_form_is_symmetric(self):
        J = ad.jacobian_covector(lambda x: [x[1], x[0]], [0.4, 1.3])
        np.testing.assert_array_equal(J, J.T)

    def test_cosecant_derivative_vanishes_at_quarter_turn(self):
        J = ad.jacobian_covector(lambda x: [0.0 * x[0], 2.0 * ad.csc(x[1])], [0.0, math.pi / 2])
        assert abs(J[1, 1]) < 1e-15


class TestExteriorDerivative:
    def test_exact_form(self):
        gamma = lambda x: [x[1] * ad.cos(x[0]), ad.sin(x[0])]  # d(x2 sin x1)
        r = ad.exterior_derivative_2form(gamma, [0.3, 0.8], [1.0, 2.0], [-0.5, 0.7])
        assert abs(r) < 1e-15

    def test_unit_area(self):
        r = ad.exterior_derivative_2form(lambda x: [0.0 * x[0], x[0]], [0.1, 0.2], [1.0, 0.0], [0.0, 1.0])
        assert r == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.exterior_derivative_2form(lambda x: [x[0], x[1]], [0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0])

    def test_roller_racer_solution_closed_on_distribution(self):
        sysm = systems.roller_racer()
        sec = systems.roller_racer_hj_section(sysm.params)
        from diracmech.geometry import horizontal_basis

        rng = np.random.default_rng(1)
        q = np.column_stack([rng.normal(size=(100, 3)), rng.uniform(0.3, 2.8, 100)])
        H = horizontal_basis(sysm.dist, q)
        r = ad.exterior_derivative_2form(sec.gamma, q, H[..., 0], H[..., 1])
        assert np.abs(r).max() < 1e-10


class TestSecondOrder:
    def test_hessian_of_cubic(self):
        out = ad.hessian(lambda x: x[0] ** 3 * x[1] + x[1] ** 2, [1.0, 2.0])
        assert out.value == 6.0
        np.testing.assert_allclose(out.grad, [6.0, 5.0])
        np.testing.assert_allclose(out.hess, [[12.0, 3.0], [3.0, 2.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(finite, min_size=3, max_size=3))
    def test_hessian_symmetric(self, x):
        f = lambda c: c[0] ** 2 * c[1] * c[2] + c[1] ** 3 * c[0] - 2.0 * c[2] ** 2 * c[0]
        h = ad.hessian(f, x).hess
        assert np.abs(h - h.T).max() < 1e-12

    def test_hessian_matches_differenced_gradient(self):
        f = lambda c: ad.sin(c[0] * c[1]) + ad.exp(c[1]) * c[0]
        x = np.array([0.4, -0.7])
        h = ad.hessian(f, x).hess
        fd = np.array([central_difference(lambda y: ad.grad_scalar(f, y)[i], x) for i in range(2)])
        assert np.abs(h - fd).max() < 1e-6


class TestRules:
    @settings(max_examples=50, deadline=None)
    @given(finite, finite)
    def test_product_rule(self, a, b):
        f = lambda c: ad.sin(c[0]) * ad.exp(c[1])
        g = ad.grad_scalar(f, [a, b])
        np.testing.assert_allclose(g, [math.cos(a) * math.exp(b), math.sin(a) * math.exp(b)], rtol=1e-14, atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.1, 3.0))
    def test_chain_and_quotient(self, a):
        g = ad.grad_scalar(lambda c: ad.sqrt(c[0]) / (1.0 + c[0] * c[0]), [a])
        ref = (0.5 / math.sqrt(a) * (1 + a * a) - math.sqrt(a) * 2 * a) / (1 + a * a) ** 2
        assert abs(g[0] - ref) < 1e-12 * max(1.0, abs(ref))

    def test_elementary_functions_match_finite_differences(self):
        funcs = [ad.sin, ad.cos, ad.tan, ad.exp, ad.log, ad.sqrt, ad.arctan, ad.arcsin, ad.sinh, ad.cosh, ad.tanh, ad.csc, ad.sec, ad.cot]
        for fn in funcs:
            for x in (0.3, 0.7):
                g = ad.grad_scalar(lambda c: fn(c[0]), [x])[0]
                fd = central_difference(lambda y: fn(y[0]), [x])[0]
                assert abs(g - fd) < 1e-6 * max(1.0, abs(g)), fn.__name__

    def test_nested_duals_do_not_perturb_each_other(self):
        # d/dx [x * d/dy (x y)] = d/dx [x^2] = 2x: a classic perturbation-confusion check
        def outer(cx):
            _, gy = ad.derivative(lambda cy: cx[0] * cy[0], [1.0])
            return cx[0] * gy[0]

        assert ad.grad_scalar(outer, [3.0])[0] == 6.0


class TestJit:
    def test_gradient_under_jit(self):
        from diracmech.integrator import jax_module

        jax = jax_module()
        jnp = jax.numpy
        f = jax.jit(lambda x: jnp.stack(ad.derivative(lambda c: c[0] ** 2 * ad.sin(c[1]), ad.components(x))[1]))
        np.testing.assert_allclose(np.asarray(f(jnp.array([2.0, 0.5]))), [4 * math.sin(0.5), 4 * math.cos(0.5)], rtol=1e-14)
