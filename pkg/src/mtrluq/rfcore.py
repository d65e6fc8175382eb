"""Two-port network algebra: S/T conversion, vec/Kronecker identities, cascading.

T-parameters follow the convention ``[b1, a1]^T = T [a2, b2]^T``::

    T = 1/S21 * [[-(S11 S22 - S12 S21), S11],
                 [-S22,                 1  ]]

so a matched line of length ``l`` has ``T = diag(exp(-gamma l), exp(+gamma l))``.

All conversion helpers work on arrays of shape ``(..., 2, 2)`` and accept
:class:`~mtrluq.dual.UArray` input as well as plain numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual as d
from .errors import GridMismatchError, SingularConversionError

SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing, positive frequency points in Hz."""

    points: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.points, dtype=float).reshape(-1)
        if f.size == 0:
            raise ValueError("frequency grid is empty")
        if not np.all(np.isfinite(f)) or np.any(f <= 0):
            raise ValueError("frequency points must be finite and > 0")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequency points must be strictly increasing")
        f.setflags(write=False)
        object.__setattr__(self, "points", f)

    @classmethod
    def linear(cls, start, stop, n):
        return cls(np.linspace(start, stop, int(n)))

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.all(self.points == other.points))

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True)
class TwoPortNetwork:
    """Per-frequency 2x2 S- or T-matrices on a :class:`FrequencyGrid`."""

    grid: FrequencyGrid
    data: np.ndarray
    rep: str = "S"
    z0: float = 50.0

    def __post_init__(self):
        if self.rep not in ("S", "T"):
            raise ValueError(f"representation must be 'S' or 'T', got {self.rep!r}")
        data = np.array(self.data, dtype=complex)
        if data.ndim == 2:
            data = data[None]
        if data.shape != (len(self.grid), 2, 2):
            raise ValueError(f"data shape {data.shape} does not match grid of {len(self.grid)} points")
        if not np.all(np.isfinite(data)):
            raise ValueError("network data must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def f(self):
        return self.grid.points

    def to_t(self):
        if self.rep == "T":
            return self
        return TwoPortNetwork(self.grid, s_to_t(self.data), "T", self.z0)

    def to_s(self):
        if self.rep == "S":
            return self
        return TwoPortNetwork(self.grid, t_to_s(self.data), "S", self.z0)

    @property
    def s(self):
        return self.to_s().data

    @property
    def t(self):
        return self.to_t().data


def _check_denominator(den, m, name):
    den = np.abs(d.val(den))
    scale = np.max(np.abs(d.val(m)), axis=(-2, -1))
    bad = den < SINGULAR_RTOL * scale
    if np.any(bad) or np.any(scale == 0):
        raise SingularConversionError(f"|{name}| below tolerance at {int(np.count_nonzero(bad))} point(s)")


def _mat(m00, m01, m10, m11):
    return d.stack([d.stack([m00, m01], axis=-1), d.stack([m10, m11], axis=-1)], axis=-2)


def s_to_t(s):
    """Convert S- to T-parameters; raises if ``|S21|`` is negligible."""
    s11, s12, s21, s22 = s[..., 0, 0], s[..., 0, 1], s[..., 1, 0], s[..., 1, 1]
    _check_denominator(s21, s, "s21")
    one = np.ones(d.val(s11).shape)
    return _mat(-(s11 * s22 - s12 * s21), s11, -s22, one) / s21[..., None, None]


def t_to_s(t):
    """Convert T- to S-parameters; raises if ``|T22|`` is negligible."""
    t11, t12, t21, t22 = t[..., 0, 0], t[..., 0, 1], t[..., 1, 0], t[..., 1, 1]
    _check_denominator(t22, t, "t22")
    one = np.ones(d.val(t11).shape)
    return _mat(t12, t11 * t22 - t12 * t21, one, -t21) / t22[..., None, None]


def vec(m):
    """Column-major vectorization: ``[[a, b], [c, d]] -> [a, c, b, d]``."""
    return d.stack([m[..., 0, 0], m[..., 1, 0], m[..., 0, 1], m[..., 1, 1]], axis=-1)


def unvec(v):
    """Inverse of :func:`vec`."""
    return _mat(v[..., 0], v[..., 2], v[..., 1], v[..., 3])


def det(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def adjugate(m):
    """``[[a, b], [c, d]] -> [[d, -b], [-c, a]]``."""
    return _mat(m[..., 1, 1], -m[..., 0, 1], -m[..., 1, 0], m[..., 0, 0])


def inv2(m):
    """Closed-form inverse of 2x2 blocks."""
    return adjugate(m) / det(m)[..., None, None]


def kron_x(a, b):
    """Calibration matrix ``X = b^T (x) a`` with ``X vec(L) = vec(a L b)``."""
    a = np.asarray(a)
    b = np.asarray(b)
    X = np.einsum("...ji,...kl->...ikjl", b, a)
    return X.reshape(X.shape[:-4] + (4, 4))


def cascade(a: TwoPortNetwork, b: TwoPortNetwork) -> TwoPortNetwork:
    """Per-frequency T-matrix product ``a @ b``."""
    if a.grid != b.grid:
        raise GridMismatchError("cannot cascade networks on different grids")
    return TwoPortNetwork(a.grid, a.t @ b.t, "T")


def matched_line_s(gamma, length):
    """S-matrix of a matched line, ``gamma`` broadcast over frequency."""
    e = np.exp(-np.asarray(gamma) * length)
    z = np.zeros_like(e)
    return np.stack([np.stack([z, e], -1), np.stack([e, z], -1)], -2)
