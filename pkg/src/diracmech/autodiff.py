"""Forward-mode automatic differentiation with tagged, nestable dual numbers.

A :class:`Dual` carries a primal part ``val`` and a block of tangents ``eps``
whose trailing axis indexes the seeded directions.  Primal parts may
themselves be duals of an *older* tag, which is how second (and higher)
derivatives are obtained: the Hessian is the derivative of the gradient, with
no hand-written second-order rules.  Tags are drawn from a global counter so
that nested differentiation never confuses perturbations.

Leaves are plain floats, numpy arrays or jax arrays.  Leading array axes are a
batch dimension, so a field can be differentiated at many points in a single
pass; under ``jax.jit`` the same code is traced and compiled.

User fields receive coordinates as a tuple of scalar-like components and must
use the elementary functions exported here (``sin``, ``cos``, ...) instead of
``math``/``numpy`` ones.  Vector-valued fields return (nested) lists.
"""

from __future__ import annotations

import itertools
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, ShapeError

_tags = itertools.count(1)


def _xp(x):
    if type(x).__module__.startswith(("jax", "jaxlib")):
        import jax.numpy as jnp

        return jnp
    return np


def is_traced(x) -> bool:
    """True when ``x`` (or the primal leaf of a dual) is a jax value."""
    while isinstance(x, Dual):
        x = x.val
    return _xp(x) is not np


def _insert(x, k):
    # new broadcast axis placed just before the last k (tangent) axes
    if isinstance(x, Dual):
        return Dual(x.tag, _insert(x.val, k), _insert(x.eps, k + 1))
    if k == 0 and np.ndim(x) == 0:
        return x
    return _xp(x).expand_dims(x, -(k + 1))


def _tx(x):
    return _insert(x, 0)


def _take(x, i, k):
    if isinstance(x, Dual):
        return Dual(x.tag, _take(x.val, i, k), _take(x.eps, i, k + 1))
    return x[(Ellipsis, i) + (slice(None),) * k]


class Dual:
    """First-order dual number ``val + eps . d`` under a perturbation tag."""

    __slots__ = ("tag", "val", "eps")
    __array_ufunc__ = None

    def __init__(self, tag: int, val, eps):
        self.tag = tag
        self.val = val
        self.eps = eps

    def __repr__(self):
        return f"Dual(tag={self.tag}, val={self.val!r}, eps={self.eps!r})"

    def _outer(self, other):
        return isinstance(other, Dual) and other.tag > self.tag

    def _same(self, other):
        return isinstance(other, Dual) and other.tag == self.tag

    def __add__(self, other):
        if self._outer(other):
            return other.__radd__(self)
        if self._same(other):
            return Dual(self.tag, self.val + other.val, self.eps + other.eps)
        return Dual(self.tag, self.val + other, self.eps)

    def __radd__(self, other):
        return Dual(self.tag, other + self.val, self.eps)

    def __sub__(self, other):
        if self._outer(other):
            return other.__rsub__(self)
        if self._same(other):
            return Dual(self.tag, self.val - other.val, self.eps - other.eps)
        return Dual(self.tag, self.val - other, self.eps)

    def __rsub__(self, other):
        return Dual(self.tag, other - self.val, -self.eps)

    def __mul__(self, other):
        if self._outer(other):
            return other.__rmul__(self)
        if self._same(other):
            return Dual(
                self.tag,
                self.val * other.val,
                _tx(self.val) * other.eps + self.eps * _tx(other.val),
            )
        return Dual(self.tag, self.val * other, self.eps * _tx(other))

    def __rmul__(self, other):
        return Dual(self.tag, other * self.val, _tx(other) * self.eps)

    def __truediv__(self, other):
        if self._outer(other):
            return other.__rtruediv__(self)
        if self._same(other):
            q = self.val / other.val
            return Dual(self.tag, q, (self.eps - _tx(q) * other.eps) / _tx(other.val))
        return Dual(self.tag, self.val / other, self.eps / _tx(other))

    def __rtruediv__(self, other):
        q = other / self.val
        return Dual(self.tag, q, _tx(-q / self.val) * self.eps)

    def __neg__(self):
        return Dual(self.tag, -self.val, -self.eps)

    def __pos__(self):
        return self

    def __abs__(self):
        s = sign(self.val)
        return Dual(self.tag, s * self.val, _tx(s) * self.eps)

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        if p == 0:
            return Dual(self.tag, self.val**0, 0.0 * self.eps)
        if p == 1:
            return self
        if p == 2:
            return self * self
        return Dual(self.tag, self.val**p, _tx(p * self.val ** (p - 1)) * self.eps)

    def __rpow__(self, base):
        out = base**self.val
        return Dual(self.tag, out, _tx(out * log(base)) * self.eps)


def _elementary(name: str, deriv: Callable[[Any], Any]):
    def f(x):
        if isinstance(x, Dual):
            return Dual(x.tag, f(x.val), _tx(deriv(x.val)) * x.eps)
        return getattr(_xp(x), name)(x)

    f.__name__ = name
    return f


sin = _elementary("sin", lambda v: cos(v))
cos = _elementary("cos", lambda v: -sin(v))
tan = _elementary("tan", lambda v: 1.0 / cos(v) ** 2)
exp = _elementary("exp", lambda v: exp(v))
log = _elementary("log", lambda v: 1.0 / v)
sqrt = _elementary("sqrt", lambda v: 0.5 / sqrt(v))
arctan = _elementary("arctan", lambda v: 1.0 / (1.0 + v * v))
arcsin = _elementary("arcsin", lambda v: 1.0 / sqrt(1.0 - v * v))
sinh = _elementary("sinh", lambda v: cosh(v))
cosh = _elementary("cosh", lambda v: sinh(v))
tanh = _elementary("tanh", lambda v: 1.0 - tanh(v) ** 2)


def sign(x):
    while isinstance(x, Dual):
        x = x.val
    return _xp(x).sign(x)


def csc(x):
    return 1.0 / sin(x)


def sec(x):
    return 1.0 / cos(x)


def cot(x):
    return cos(x) / sin(x)


def value(x):
    """Strip every dual layer and return the primal leaf."""
    while isinstance(x, Dual):
        x = x.val
    return x


# ---------------------------------------------------------------- trees


def _is_node(x):
    return isinstance(x, (list, tuple))


def tree_map(fn, tree):
    if _is_node(tree):
        return [tree_map(fn, t) for t in tree]
    return fn(tree)


def _primal(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.val
    return x


def _partials(x, tag, m):
    if isinstance(x, Dual) and x.tag == tag:
        return [_take(x.eps, i, 0) for i in range(m)]
    return [0.0] * m


def derivative(f: Callable, comps: Sequence) -> tuple[Any, Any]:
    """Seed ``comps`` with a fresh tag and evaluate ``f``.

    Returns ``(values, partials)`` where ``values`` mirrors the output tree of
    ``f`` and each leaf of ``partials`` is the list ``[d leaf / d comps[i]]``.
    Works when ``comps`` already carry older tags (nested differentiation).
    """
    tag = next(_tags)
    m = len(comps)
    eye = np.eye(m)
    seeded = tuple(Dual(tag, c, eye[i]) for i, c in enumerate(comps))
    out = f(seeded)
    return tree_map(lambda y: _primal(y, tag), out), tree_map(lambda y: _partials(y, tag, m), out)


def directional(f: Callable, comps: Sequence, direction: Sequence) -> tuple[Any, Any]:
    """Value and single directional derivative of ``f`` along ``direction``."""
    tag = next(_tags)
    seeded = tuple(Dual(tag, c, _tx(d) * np.ones(1)) for c, d in zip(comps, direction))
    out = f(seeded)
    return (
        tree_map(lambda y: _primal(y, tag), out),
        tree_map(lambda y: _partials(y, tag, 1)[0], out),
    )


def value_grad(f: Callable, comps: Sequence):
    """Symbolic-free ``(f, [df/dx_i])`` on components (nestable)."""
    return derivative(f, comps)


def value_grad_hess(f: Callable, comps: Sequence):
    """``(f, grad, hess)`` on components via a dual-of-dual evaluation."""

    def inner(c):
        v, g = derivative(f, c)
        return [v, g]

    (v, g), (dv, dg) = derivative(inner, comps)
    return v, g, dg


# ---------------------------------------------------------------- numeric API


def components(x) -> tuple:
    """Split an array ``(..., m)`` into a tuple of ``m`` batch arrays."""
    if isinstance(x, (list, tuple)):
        return tuple(x)
    xp = _xp(x)
    x = xp.asarray(x, dtype=float) if xp is np else x
    return tuple(x[..., i] for i in range(x.shape[-1]))


def stack(objs, batch_shape=()):
    """Stack a (nested) list of numeric leaves along new trailing axes."""
    if _is_node(objs):
        leaves = [stack(o, batch_shape) for o in objs]
        xp = np if not leaves else _xp(leaves[0])
        if any(_xp(leaf) is not np for leaf in leaves):
            import jax.numpy as jnp

            xp = jnp
        if not leaves:
            return np.zeros(tuple(batch_shape) + (0,))
        return xp.stack(leaves, axis=-1 - (np.ndim(leaves[0]) - len(batch_shape)))
    if isinstance(objs, Dual):
        raise TypeError("cannot stack a dual number into a numeric array")
    xp = _xp(objs)
    return xp.broadcast_to(xp.asarray(objs, dtype=float), tuple(batch_shape))


def check_finite(arr, what="field"):
    """Raise :class:`DomainError` naming the first non-finite entry."""
    if _xp(arr) is not np:
        return arr
    arr = np.asarray(arr)
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"{what} is not finite at index {idx}", index=idx)
    return arr


def _batch_shape(x):
    return np.shape(x)[:-1]


def grad_scalar(f: Callable, x) -> np.ndarray:
    """Gradient of a scalar field ``f(comps)`` at ``x`` (shape ``(..., m)``)."""
    x = np.asarray(x, dtype=float)
    v, g = derivative(f, components(x))
    check_finite(stack(v, _batch_shape(x)), "value")
    return check_finite(stack(g, _batch_shape(x)), "gradient")


def jacobian(F: Callable, x) -> np.ndarray:
    """Standard Jacobian ``J[..., j, i] = dF_j/dx_i`` of a list-valued field."""
    x = np.asarray(x, dtype=float)
    v, g = derivative(F, components(x))
    check_finite(stack(v, _batch_shape(x)), "value")
    return check_finite(stack(g, _batch_shape(x)), "jacobian")


def jacobian_covector(gamma: Callable, x) -> np.ndarray:
    """Jacobian of a one-form in the index order ``J[..., i, j] = d gamma_j / d x^i``."""
    return np.swapaxes(jacobian(gamma, x), -1, -2)


class SecondOrder(NamedTuple):
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def hessian(f: Callable, x) -> SecondOrder:
    """Value, gradient and Hessian of a scalar field from one nested evaluation."""
    x = np.asarray(x, dtype=float)
    b = _batch_shape(x)
    v, g, h = value_grad_hess(f, components(x))
    return SecondOrder(
        check_finite(stack(v, b), "value"),
        check_finite(stack(g, b), "gradient"),
        check_finite(stack(h, b), "hessian"),
    )


def exterior_derivative_2form(gamma: Callable, x, u, w) -> np.ndarray:
    """``d gamma(u, w) = (d_i gamma_j - d_j gamma_i) u^i w^j`` at ``x``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    m = x.shape[-1]
    if u.shape[-1] != m or w.shape[-1] != m:
        raise ShapeError(f"vectors of length {u.shape[-1]}, {w.shape[-1]} at a point of dimension {m}")
    J = jacobian_covector(gamma, x)
    if J.shape[-1] != m:
        raise ShapeError(f"one-form has {J.shape[-1]} components on a {m}-dimensional space")
    curl = J - np.swapaxes(J, -1, -2)
    return np.einsum("...i,...ij,...j->...", u, curl, w)
