"""Forward-mode dual arrays for first-order (GUM) uncertainty propagation.

A :class:`UArray` carries a complex value array together with the partial
derivatives of every element with respect to ``P`` real input parameters.
Gradients are stored with the parameter axis first, ``grad.shape == (P,) +
value.shape``, so that numpy broadcasting and batched ``matmul`` apply to the
gradient unchanged.

The module level functions (:func:`exp`, :func:`log`, :func:`inv`, ...) accept
either plain numpy arrays or :class:`UArray` values, which lets a single
implementation of the calibration run in nominal or in uncertain mode.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateTargetError

__all__ = [
    "UArray",
    "UScalar",
    "is_dual",
    "val",
    "grad_of",
    "seed",
    "exp",
    "log",
    "sqrt",
    "conj",
    "absolute",
    "real",
    "imag",
    "where",
    "stack",
    "inv",
    "sum_",
    "take_along_axis",
    "eig_derivative",
]


def _expand(g, ndim):
    # insert broadcast axes right after the parameter axis
    missing = ndim - (g.ndim - 1)
    if missing <= 0:
        return g
    return g.reshape(g.shape[:1] + (1,) * missing + g.shape[1:])


def _fit(g, shape):
    if g.shape[1:] == tuple(shape):
        return g
    return np.broadcast_to(g, g.shape[:1] + tuple(shape))


def _parts(x):
    if isinstance(x, UArray):
        return x.value, x.grad
    return np.asarray(x), None


class UArray:
    """Value array plus gradient with respect to real parameters.

    A zero-dimensional ``UArray`` is the scalar carrier (:data:`UScalar`).
    """

    __array_priority__ = 1000
    __slots__ = ("value", "grad")

    def __init__(self, value, grad):
        value = np.asarray(value)
        grad = np.asarray(grad)
        if grad.shape[1:] != value.shape:
            grad = np.broadcast_to(grad, grad.shape[:1] + value.shape)
        self.value = value
        self.grad = grad

    # -- bookkeeping -------------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def nparams(self):
        return self.grad.shape[0]

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"UArray(shape={self.shape}, nparams={self.nparams})"

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return UArray(self.value[idx], self.grad[(slice(None),) + idx])

    @property
    def mT(self):
        return UArray(self.value.swapaxes(-1, -2), self.grad.swapaxes(-1, -2))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        v = self.value.reshape(shape)
        return UArray(v, self.grad.reshape(self.grad.shape[:1] + v.shape))

    # -- arithmetic ----------------------------------------------------------
    def __neg__(self):
        return UArray(-self.value, -self.grad)

    def __pos__(self):
        return self

    def __add__(self, other):
        ov, og = _parts(other)
        v = self.value + ov
        g = _expand(self.grad, v.ndim)
        if og is not None:
            g = g + _expand(og, v.ndim)
        return UArray(v, _fit(g, v.shape))

    __radd__ = __add__

    def __sub__(self, other):
        ov, og = _parts(other)
        v = self.value - ov
        g = _expand(self.grad, v.ndim)
        if og is not None:
            g = g - _expand(og, v.ndim)
        return UArray(v, _fit(g, v.shape))

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        ov, og = _parts(other)
        v = self.value * ov
        g = _expand(self.grad, v.ndim) * ov
        if og is not None:
            g = g + self.value * _expand(og, v.ndim)
        return UArray(v, _fit(g, v.shape))

    __rmul__ = __mul__

    def __truediv__(self, other):
        ov, og = _parts(other)
        v = self.value / ov
        g = _expand(self.grad, v.ndim) / ov
        if og is not None:
            g = g - (v / ov) * _expand(og, v.ndim)
        return UArray(v, _fit(g, v.shape))

    def __rtruediv__(self, other):
        v = np.asarray(other) / self.value
        g = _expand(self.grad, v.ndim) * (-v / self.value)
        return UArray(v, _fit(g, v.shape))

    def __pow__(self, n):
        if isinstance(n, UArray):
            return exp(log(self) * n)
        v = self.value ** n
        g = self.grad * (n * self.value ** (n - 1))
        return UArray(v, g)

    def __matmul__(self, other):
        ov, og = _parts(other)
        if self.ndim < 2 or ov.ndim < 2:
            raise ValueError("UArray matmul needs operands with ndim >= 2")
        v = self.value @ ov
        g = _expand(self.grad, v.ndim) @ ov
        if og is not None:
            g = g + self.value @ _expand(og, v.ndim)
        return UArray(v, _fit(g, v.shape))

    def __rmatmul__(self, other):
        ov = np.asarray(other)
        if self.ndim < 2 or ov.ndim < 2:
            raise ValueError("UArray matmul needs operands with ndim >= 2")
        v = ov @ self.value
        return UArray(v, _fit(ov @ _expand(self.grad, v.ndim), v.shape))

    # -- elementwise functions ----------------------------------------------
    def conj(self):
        return UArray(np.conj(self.value), np.conj(self.grad))

    @property
    def real(self):
        return UArray(self.value.real, self.grad.real)

    @property
    def imag(self):
        return UArray(self.value.imag, self.grad.imag)

    def exp(self):
        v = np.exp(self.value)
        return UArray(v, self.grad * v)

    def log(self):
        return UArray(np.log(self.value), self.grad / self.value)

    def sqrt(self):
        v = np.sqrt(self.value)
        return UArray(v, self.grad / (2 * v))

    def __abs__(self):
        v = np.abs(self.value)
        return UArray(v, (np.conj(self.value) * self.grad).real / v)

    def sum(self, axis=None):
        if axis is None:
            return UArray(self.value.sum(), self.grad.reshape(self.nparams, -1).sum(axis=1))
        gaxis = axis + 1 if axis >= 0 else axis
        return UArray(self.value.sum(axis=axis), self.grad.sum(axis=gaxis))


UScalar = UArray


# -- dispatching helpers ---------------------------------------------------

def is_dual(x):
    return isinstance(x, UArray)


def val(x):
    """Nominal value of ``x`` (identity for numpy input)."""
    return x.value if isinstance(x, UArray) else np.asarray(x)


def grad_of(x, nparams):
    """Gradient of ``x``; zeros for a constant."""
    if isinstance(x, UArray):
        return x.grad
    x = np.asarray(x)
    return np.zeros((nparams,) + x.shape, dtype=complex)


def seed(value, grad):
    """Wrap ``value`` with an explicit gradient (``grad.shape = (P,) + value.shape``)."""
    return UArray(np.asarray(value), np.asarray(grad))


def exp(x):
    return x.exp() if isinstance(x, UArray) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, UArray) else np.log(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, UArray) else np.sqrt(x)


def conj(x):
    return x.conj() if isinstance(x, UArray) else np.conj(x)


def absolute(x):
    return abs(x) if isinstance(x, UArray) else np.abs(x)


def real(x):
    return x.real if isinstance(x, UArray) else np.real(x)


def imag(x):
    return x.imag if isinstance(x, UArray) else np.imag(x)


def sum_(x, axis=None):
    return x.sum(axis=axis) if isinstance(x, UArray) else np.sum(x, axis=axis)


def _nparams(items):
    for x in items:
        if isinstance(x, UArray):
            return x.nparams
    return None


def where(cond, a, b):
    """``np.where`` on values; gradients follow the selected branch."""
    cond = np.asarray(cond)
    P = _nparams((a, b))
    av, bv = val(a), val(b)
    v = np.where(cond, av, bv)
    if P is None:
        return v
    ga = _expand(grad_of(a, P), v.ndim)
    gb = _expand(grad_of(b, P), v.ndim)
    return UArray(v, _fit(np.where(cond, ga, gb), v.shape))


def stack(items, axis=0):
    """Stack numpy arrays, scalars and UArrays; constants get zero gradient."""
    items = list(items)
    P = _nparams(items)
    values = [val(x) for x in items]
    shape = np.broadcast_shapes(*[v.shape for v in values])
    values = [np.broadcast_to(v, shape) for v in values]
    v = np.stack(values, axis=axis)
    if P is None:
        return v
    gaxis = axis + 1 if axis >= 0 else axis
    grads = []
    for x in items:
        if isinstance(x, UArray):
            grads.append(_fit(_expand(x.grad, len(shape)), shape))
        else:
            grads.append(np.zeros((P,) + shape, dtype=complex))
    return UArray(v, np.stack(grads, axis=gaxis))


def take_along_axis(x, indices, axis):
    if not isinstance(x, UArray):
        return np.take_along_axis(np.asarray(x), indices, axis=axis)
    v = np.take_along_axis(x.value, indices, axis=axis)
    gaxis = axis + 1 if axis >= 0 else axis
    g = np.take_along_axis(x.grad, indices[None], axis=gaxis)
    return UArray(v, g)


def inv(a):
    """Matrix inverse over the last two axes; ``d(A^-1) = -A^-1 dA A^-1``."""
    if not isinstance(a, UArray):
        return np.linalg.inv(a)
    ai = np.linalg.inv(a.value)
    return UArray(ai, -(ai @ a.grad @ ai))


def eig_derivative(F, targets=None, norm_index=None, nominal=None, strict=True, gap_tol=1e-10):
    """Selected eigenpairs of ``F`` with first-order derivatives.

    Parameters
    ----------
    F : UArray or ndarray, shape (..., n, n)
    targets : int array, shape (..., T), optional
        Indices into the eigenvalue order returned by ``np.linalg.eig``;
        defaults to all eigenpairs.
    norm_index : sequence of int, length T, optional
        Each returned eigenvector is scaled so that this entry equals 1.
        Without it the entry of largest magnitude is used.
    nominal : (w, V), optional
        Precomputed ``np.linalg.eig(val(F))``.
    strict : bool
        Raise :class:`DegenerateTargetError` for a non-simple target instead
        of returning NaN gradients for it.

    Returns
    -------
    lam : shape (..., T)
    vec : shape (..., n, T)

    Notes
    -----
    With ``F v = lam v`` and the normalization ``e_k^T v = 1`` fixed, the
    derivative satisfies ``(F - lam I) dv - v dlam = -dF v`` and
    ``e_k^T dv = 0``.  The bordered ``(n+1)`` system is nonsingular exactly
    when ``lam`` is simple, so only the targets are needed and the rest of
    the spectrum may be degenerate.
    """
    Fv = val(F)
    n = Fv.shape[-1]
    batch = Fv.shape[:-2]
    w, V = nominal if nominal is not None else np.linalg.eig(Fv)
    if targets is None:
        targets = np.broadcast_to(np.arange(n), batch + (n,))
    targets = np.asarray(targets)
    T = targets.shape[-1]

    lams, vecs, lgrads, vgrads = [], [], [], []
    wscale = np.max(np.abs(w), axis=-1)
    for t in range(T):
        idx = targets[..., t]
        lam = np.take_along_axis(w, idx[..., None], axis=-1)[..., 0]
        v = np.take_along_axis(V, idx[..., None, None], axis=-1)[..., 0]
        if norm_index is not None:
            k = np.full(batch, norm_index[t], dtype=int)
        else:
            k = np.argmax(np.abs(v), axis=-1)
        v = v / np.take_along_axis(v, k[..., None], axis=-1)

        others = np.abs(w - lam[..., None])
        np.put_along_axis(others, idx[..., None], np.inf, axis=-1)
        degenerate = others.min(axis=-1) <= gap_tol * np.maximum(wscale, np.finfo(float).tiny)
        if strict and np.any(degenerate):
            raise DegenerateTargetError("target eigenvalue is not simple")

        lams.append(lam)
        vecs.append(v)
        if not isinstance(F, UArray):
            continue

        ek = np.zeros(batch + (n,), dtype=complex)
        np.put_along_axis(ek, k[..., None], 1.0, axis=-1)
        Bm = np.zeros(batch + (n + 1, n + 1), dtype=complex)
        Bm[..., :n, :n] = Fv - lam[..., None, None] * np.eye(n)
        Bm[..., :n, n] = -v
        Bm[..., n, :n] = ek
        Bm = np.where(degenerate[..., None, None], np.eye(n + 1), Bm)

        dFv = (F.grad @ v[..., None])[..., 0]  # (P, ..., n)
        rhs = np.zeros((F.nparams,) + batch + (n + 1,), dtype=complex)
        rhs[..., :n] = -dFv
        rhs = np.moveaxis(rhs, 0, -1)  # (..., n+1, P)
        sol = np.linalg.solve(Bm, rhs)
        sol = np.moveaxis(sol, -1, 0)  # (P, ..., n+1)
        sol = np.where(degenerate[..., None], np.nan, sol)
        vgrads.append(sol[..., :n])
        lgrads.append(sol[..., n])

    lam = np.stack(lams, axis=-1)
    vec = np.stack(vecs, axis=-1)
    if not isinstance(F, UArray):
        return lam, vec
    return UArray(lam, np.stack(lgrads, axis=-1)), UArray(vec, np.stack(vgrads, axis=-1))
