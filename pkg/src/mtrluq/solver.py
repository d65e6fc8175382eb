"""Multiline TRL calibration through a single weighted 4x4 eigenvalue problem.

Measurement model, per frequency and line standard ``i``::

    vec(M_i) = k (B^T (x) A) vec(L_i),     L_i = diag(exp(-gamma l_i), exp(+gamma l_i))

With ``D = diag(det M_i)`` and an antisymmetric weighting ``W`` the product
``F = M W D^-1 M^T P Q`` is similar to ``diag(-lam, 0, 0, +lam)``, its
similarity transform being the calibration matrix itself.  The eigenvectors of
``-lam`` and ``+lam`` give the four normalized error terms; thru and reflect
fix the remaining scale.

The numerical core (``_core``) is written once and accepts either numpy arrays
or :class:`~mtrluq.dual.UArray` inputs; value-dependent choices (weighting,
branch selection, phase unwrapping) are always made on nominal values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import dual as d
from .errors import CalibrationError, GridMismatchError
from .rfcore import FrequencyGrid, TwoPortNetwork, det, inv2, s_to_t, t_to_s, vec

C0 = 299792458.0

# P Q equals J (x) J with J = [[0, 1], [-1, 0]], hence X^T P Q X = det(A) det(B) P Q.
P = np.fliplr(np.eye(4))
Q = np.diag([1.0, -1.0, -1.0, 1.0])
PQ = P @ Q
# permutation exchanging vec entries 1 and 4: Q SWAP_14 vec(m) = vec(adj(m))
SWAP_14 = np.eye(4)[[3, 1, 2, 0]]
# commutation matrix: K vec(m) = vec(m^T); P = SWAP_14 K
K_COMM = np.eye(4)[[0, 2, 1, 3]]

DEGENERACY_RTOL = 1e-10
SINGULAR_LINE_RTOL = 1e-12
AMBIGUOUS_COS = 1e-3
MAX_REFLECT = 1.5
EXP_LIMIT = 700.0


class Status(enum.IntFlag):
    OK = 0
    DEGENERATE = 1
    SINGULAR_LINE = 2
    AMBIGUOUS_SIGN = 4
    INCONSISTENT_REFLECT = 8
    UNWRAP = 16  # warning only


HARD_FAILURE = Status.DEGENERATE | Status.SINGULAR_LINE | Status.AMBIGUOUS_SIGN | Status.INCONSISTENT_REFLECT


def describe_status(flags):
    flags = Status(int(flags))
    return "|".join(s.name.lower() for s in Status if s and s in flags) or "ok"


@dataclass(frozen=True)
class LineStandard:
    length: float
    measurement: TwoPortNetwork

    def __post_init__(self):
        if not np.isfinite(self.length) or self.length < 0:
            raise ValueError(f"line length must be finite and >= 0, got {self.length}")


@dataclass(frozen=True)
class ReflectStandard:
    measurement: TwoPortNetwork
    estimate: complex = -1.0

    def __post_init__(self):
        if not 0 < abs(self.estimate) <= MAX_REFLECT:
            raise ValueError("reflect estimate magnitude must lie in (0, 1.5]")


@dataclass(frozen=True)
class CalibrationSet:
    lines: tuple
    reflect: ReflectStandard
    ereff_guess: float = 1.0

    def __post_init__(self):
        lines = tuple(self.lines)
        object.__setattr__(self, "lines", lines)
        if len(lines) < 2:
            raise ValueError("at least two line standards are required")
        grid = lines[0].measurement.grid
        for ln in lines[1:]:
            if ln.measurement.grid != grid:
                raise GridMismatchError("all line standards must share one frequency grid")
        if self.reflect.measurement.grid != grid:
            raise GridMismatchError("reflect grid differs from line grid")
        lengths = self.lengths
        if np.ptp(lengths) == 0:
            raise ValueError("line lengths must not all be equal")
        if self.ereff_guess <= 0:
            raise ValueError("ereff_guess must be > 0")

    @property
    def grid(self) -> FrequencyGrid:
        return self.lines[0].measurement.grid

    @property
    def lengths(self):
        return np.array([ln.length for ln in self.lines], dtype=float)


@dataclass(frozen=True)
class NormalizedX:
    """Normalized error terms ``a21/a11, b12/b11, a12/a22, b21/b22`` and eigenvalue."""

    alpha: np.ndarray
    beta: np.ndarray
    a_p: np.ndarray
    b_p: np.ndarray
    lambd: np.ndarray

    def matrix(self):
        return assemble_normalized(self.alpha, self.beta, self.a_p, self.b_p)


@dataclass(frozen=True)
class CalibrationResult:
    """Error boxes with ``a22 = b22 = 1``; ``k`` carries the residual scale."""

    grid: FrequencyGrid
    A: np.ndarray
    B: np.ndarray
    k: np.ndarray
    gamma: np.ndarray
    gamma_reflect: np.ndarray
    normalized: NormalizedX
    weighting: np.ndarray
    status: np.ndarray
    thru_index: int
    lengths: np.ndarray = field(repr=False)

    @property
    def f(self):
        return self.grid.points

    @property
    def ereff(self):
        return ereff_from_gamma(self.gamma, self.f)

    @property
    def loss_db_per_m(self):
        return loss_db_per_m(self.gamma)

    @property
    def ok(self):
        return (self.status & int(HARD_FAILURE)) == 0

    @property
    def issues(self):
        return [(int(i), describe_status(self.status[i])) for i in np.flatnonzero(~self.ok)]

    def X(self):
        """Full 4x4 calibration matrices ``B^T (x) A`` per frequency."""
        from .rfcore import kron_x

        return kron_x(self.A, self.B)


# -- elementary operations ----------------------------------------------------

def ereff_from_gamma(gamma, f):
    return -(C0 * gamma / (2 * np.pi * np.asarray(f))) ** 2


def loss_db_per_m(gamma):
    return 20 / np.log(10) * d.real(gamma)


def estimate_gamma_initial(f, ereff_guess):
    """Lossless seed ``j 2 pi f / c0 sqrt(ereff_guess)``."""
    if np.any(np.asarray(ereff_guess) <= 0):
        raise ValueError("ereff_guess must be > 0")
    return 1j * 2 * np.pi * np.asarray(f, dtype=float) / C0 * np.sqrt(ereff_guess)


def build_measurement_matrix(lines, f_index=None):
    """Columns ``vec(M_i)`` of the T-parameter line measurements.

    Returns shape ``(4, N)`` for a single frequency index or ``(F, 4, N)``.
    """
    if len(lines) < 2:
        raise ValueError("at least two lines are required")
    T = np.stack([ln.measurement.t for ln in lines], axis=1)  # (F, N, 2, 2)
    M = np.swapaxes(vec(T), -1, -2)
    return M if f_index is None else M[f_index]


def compute_weighting(lengths, gamma_est):
    """Antisymmetric weighting ``conj(y z^T - z y^T)``.

    ``z_i = exp(-gamma l_i)``, ``y_i = exp(+gamma l_i)``.  ``gamma_est`` may be a
    scalar or an array of shape ``(F,)``; the result then has shape
    ``(F, N, N)``.  When the exponents would overflow, all entries share a
    common scale factor, which does not change the eigenvectors.
    """
    return _weighting(lengths, gamma_est)[0]


def _weighting(lengths, gamma_est):
    l = np.asarray(lengths, dtype=float)
    g = np.asarray(gamma_est, dtype=complex)[..., None, None]
    dl = l[:, None] - l[None, :]
    expo = g * dl
    c = np.max(np.abs(expo.real), axis=(-2, -1), keepdims=True)
    c = np.where(c > EXP_LIMIT, c, 0.0)
    W = np.conj(np.exp(expo - c) - np.exp(-expo - c))
    # predicted +lam = y^T W z for the model that built W (same common scale)
    lam_pred = np.sum(W * np.exp(expo - c), axis=(-2, -1))
    # magnitude W would have without cancellation, for scale-free degeneracy tests
    wscale = np.sum(np.abs(np.exp(expo - c)) + np.abs(np.exp(-expo - c)), axis=(-2, -1))
    return W, lam_pred, wscale


def assemble_normalized(alpha, beta, a_p, b_p):
    """``X_n = [[1, b'], [beta, 1]] (x) [[1, a'], [alpha, 1]]`` with unit (1,1), (4,4)."""
    one = np.ones(np.shape(d.val(alpha)))
    rows = [
        [one, a_p, b_p, a_p * b_p],
        [alpha, one, alpha * b_p, b_p],
        [beta, a_p * beta, one, a_p],
        [alpha * beta, beta, alpha, one],
    ]
    return d.stack([d.stack(r, axis=-1) for r in rows], axis=-2)


def _measurement_products(T_all):
    vT = vec(T_all)  # (F, N, 4)
    M = vT.mT if d.is_dual(vT) else np.swapaxes(vT, -1, -2)
    R = (vT @ PQ) / det(T_all)[..., None]
    return M, R


def _degeneracy_scale(M, R, wscale):
    return np.max(np.abs(M), axis=(-2, -1)) * np.max(np.abs(R), axis=(-2, -1)) * wscale


def _select_eigs(Fv, lam_pred, scale):
    """Pick the -lam and +lam eigenvalues; ``scale`` bounds |F| for the degeneracy test."""
    w, V = np.linalg.eig(Fv)
    order = np.argsort(-np.abs(w), axis=-1, kind="stable")
    top = order[..., :2]
    w2 = np.take_along_axis(w, top, axis=-1)
    score = (w2 * np.conj(lam_pred)[..., None]).real
    first_minus = score[..., 0] <= score[..., 1]
    minus = np.where(first_minus, top[..., 0], top[..., 1])
    plus = np.where(first_minus, top[..., 1], top[..., 0])
    degenerate = ~(np.min(np.abs(w2), axis=-1) > DEGENERACY_RTOL * scale)
    return np.stack([minus, plus], axis=-1), (w, V), degenerate


def _normalized_from_F(F, targets, nominal):
    lam, vecs = d.eig_derivative(F, targets=targets, norm_index=(0, 3), nominal=nominal, strict=False)
    x1 = vecs[..., :, 0]
    x4 = vecs[..., :, 1]
    return x1[..., 1], x1[..., 2], x4[..., 2], x4[..., 1], lam[..., 1]


def solve_x(M, W, D=None):
    """Solve the weighted eigenproblem for one frequency (or a batch).

    ``M``: ``(4, N)`` or ``(F, 4, N)`` column stack of ``vec(M_i)``;
    ``W``: matching antisymmetric weighting; ``D``: line determinants
    (computed from ``M`` when omitted).  Raises on degenerate input.
    """
    from .errors import DegenerateEigenvaluesError, SingularLineError

    M = np.asarray(M, dtype=complex)
    single = M.ndim == 2
    if single:
        M = M[None]
        W = np.asarray(W)[None]
    T_all = np.stack([M[..., 0, :], M[..., 2, :], M[..., 1, :], M[..., 3, :]], axis=-1).reshape(
        M.shape[0], M.shape[2], 2, 2
    )
    dets = det(T_all) if D is None else np.asarray(D).reshape(M.shape[0], -1)
    scale = np.max(np.abs(T_all), axis=(-2, -1)) ** 2
    if np.any(np.abs(dets) < SINGULAR_LINE_RTOL * scale):
        raise SingularLineError("line measurement with vanishing determinant")
    R = (np.swapaxes(M, -1, -2) @ PQ) / dets[..., None]
    F = M @ W @ R
    # without a propagation model, -lam is the eigenvalue with the smaller real part
    lam_pred = np.ones(F.shape[:-2], dtype=complex)
    scale = _degeneracy_scale(M, R, np.sum(np.abs(W), axis=(-2, -1)))
    targets, nominal, degenerate = _select_eigs(F, lam_pred, scale)
    if np.any(degenerate):
        raise DegenerateEigenvaluesError("eigenvalue magnitude below tolerance")
    alpha, beta, a_p, b_p, lam = _normalized_from_F(F, targets, nominal)
    out = NormalizedX(alpha, beta, a_p, b_p, lam)
    if single:
        out = NormalizedX(*(np.asarray(x)[0] for x in (alpha, beta, a_p, b_p, lam)))
    return out


def _gamma_fit(T_all, alpha, beta, a_p, b_p, lengths, thru, seed):
    N = d.val(T_all).shape[-3]
    one = np.ones(np.shape(d.val(alpha)))
    An_inv = inv2(d.stack([d.stack([one, a_p], -1), d.stack([alpha, one], -1)], -2))
    Bn_inv = inv2(d.stack([d.stack([one, beta], -1), d.stack([b_p, one], -1)], -2))
    E = An_inv[..., None, :, :] @ T_all @ Bn_inv[..., None, :, :]  # k diag(a11 b11 z, y)
    e0 = E[..., 0, 0]
    e3 = E[..., 1, 1]
    z = e0 / e0[..., thru : thru + 1]
    y = e3 / e3[..., thru : thru + 1]
    q = (z + 1 / y) / 2
    g = -d.log(q)  # ~ gamma * (l_i - l_thru)

    lv = np.asarray(d.val(lengths), dtype=float)
    dl = lengths - lengths[..., thru : thru + 1]
    dlv = lv - lv[..., thru : thru + 1]
    seed = np.asarray(seed)[..., None]
    n = np.round((seed * dlv - d.val(g)).imag / (2 * np.pi))
    n = np.nan_to_num(n)
    g = g + 2j * np.pi * n
    resid = np.abs((seed * dlv - d.val(g)).imag)
    unwrap_bad = np.any(resid > np.pi / 2, axis=-1)

    w = np.abs(dlv) * np.ones(N)
    gamma = d.sum_(g * (w * dl), axis=-1) / d.sum_(w * dl * dl, axis=-1)
    gamma = d.where(d.val(gamma).real < 0, -d.conj(gamma), gamma)
    return gamma, E, unwrap_bad


def _denormalize(E, alpha, beta, a_p, b_p, gamma, lengths, thru, S_reflect, reflect_ratio, reflect_estimate):
    e0t = E[..., thru, 0, 0]
    e3t = E[..., thru, 1, 1]
    lt = lengths[..., thru]
    k = e3t * d.exp(-gamma * lt)
    a11b11 = e0t / e3t * d.exp(2 * gamma * lt)

    Ga = S_reflect[..., 0, 0]
    Gb = S_reflect[..., 1, 1]
    num_a = (Ga - a_p) / (1 - Ga * alpha)
    num_b = (Gb + b_p) / (1 + Gb * beta)
    a11 = d.sqrt(reflect_ratio * num_a / num_b * a11b11)
    refl = num_a / a11
    est = np.asarray(reflect_estimate, dtype=complex)
    proj = (d.val(refl) * np.conj(est)).real
    flip = proj < 0
    a11 = d.where(flip, -a11, a11)
    refl = d.where(flip, -refl, refl)
    b11 = a11b11 / a11

    ambiguous = ~(np.abs(proj) >= AMBIGUOUS_COS * np.abs(d.val(refl)) * np.abs(est))
    inconsistent = ~(np.abs(d.val(refl)) <= MAX_REFLECT)

    one = np.ones(np.shape(d.val(alpha)))
    A = d.stack([d.stack([a11, a_p], -1), d.stack([alpha * a11, one], -1)], -2)
    B = d.stack([d.stack([b11, beta * b11], -1), d.stack([b_p, one], -1)], -2)
    return A, B, k, refl, ambiguous, inconsistent


def _pass_one(f, T_all, lengths, thru, ereff_guess):
    """Sequential sweep: each frequency seeds its weighting from the previous one.

    Value-only; mirrors the batched pass but avoids the generic helpers.
    """
    F_n = len(f)
    gammas = np.empty(F_n, dtype=complex)
    status = np.zeros(F_n, dtype=int)
    M_all, R_all = _measurement_products(T_all)
    dl = lengths - lengths[thru]
    ddl = dl[:, None] - dl[None, :]
    w = np.abs(dl)
    wdl2 = np.sum(w * dl * dl)
    g_prev = estimate_gamma_initial(f[:1], ereff_guess)[0]
    f_prev = f[0]
    for n in range(F_n):
        seed = g_prev * (f[n] / f_prev)
        expo = seed * ddl
        c = np.max(np.abs(expo.real))
        c = c if c > EXP_LIMIT else 0.0
        ep, em = np.exp(expo - c), np.exp(-expo - c)
        W = np.conj(ep - em)
        lam_pred = np.sum(W * ep)
        scale = np.max(np.abs(M_all[n])) * np.max(np.abs(R_all[n])) * np.sum(np.abs(ep) + np.abs(em))
        Fm = M_all[n] @ W @ R_all[n]
        if not np.all(np.isfinite(Fm)):
            gammas[n] = seed
            status[n] |= Status.DEGENERATE
            continue
        ev, V = np.linalg.eig(Fm)
        top = np.argsort(-np.abs(ev), kind="stable")[:2]
        if not np.min(np.abs(ev[top])) > DEGENERACY_RTOL * scale:
            gammas[n] = seed
            status[n] |= Status.DEGENERATE
            continue
        score = (ev[top] * np.conj(lam_pred)).real
        im, ip = (top[0], top[1]) if score[0] <= score[1] else (top[1], top[0])
        x1 = V[:, im] / V[0, im]
        x4 = V[:, ip] / V[3, ip]
        alpha, beta, a_p, b_p = x1[1], x1[2], x4[2], x4[1]
        An_inv = np.array([[1, -a_p], [-alpha, 1]]) / (1 - alpha * a_p)
        Bn_inv = np.array([[1, -beta], [-b_p, 1]]) / (1 - beta * b_p)
        E = An_inv @ T_all[n] @ Bn_inv
        z = E[:, 0, 0] / E[thru, 0, 0]
        y = E[:, 1, 1] / E[thru, 1, 1]
        with np.errstate(all="ignore"):
            g = -np.log((z + 1 / y) / 2)
        k = np.nan_to_num(np.round((seed * dl - g).imag / (2 * np.pi)))
        g = g + 2j * np.pi * k
        gamma = np.sum(w * dl * g) / wdl2
        if gamma.real < 0:
            gamma = -np.conj(gamma)
        if not np.isfinite(gamma):
            gammas[n] = seed
            status[n] |= Status.DEGENERATE
            continue
        if np.any(np.abs((seed * dl - g).imag) > np.pi / 2):
            status[n] |= Status.UNWRAP
        gammas[n] = gamma
        g_prev, f_prev = gamma, f[n]
    return gammas, status


def _core(f, T_all, lengths, S_reflect, reflect_ratio, reflect_estimate, ereff_guess):
    """Full pipeline on ``(F, N, 2, 2)`` line T-matrices; numpy or dual inputs."""
    f = np.asarray(f, dtype=float)
    lv = np.asarray(d.val(lengths), dtype=float)
    lv = lv if lv.ndim == 1 else lv[0]
    thru = int(np.argmin(lv))
    Tv = d.val(T_all)

    status = np.zeros(len(f), dtype=int)
    dets = np.abs(det(Tv))
    scale = np.max(np.abs(Tv), axis=(-2, -1)) ** 2
    singular = np.any(~(dets >= SINGULAR_LINE_RTOL * scale), axis=-1)
    status[singular] |= Status.SINGULAR_LINE

    with np.errstate(all="ignore"):
        gamma1, st1 = _pass_one(f, np.where(singular[:, None, None, None], np.eye(2), Tv), lv, thru, ereff_guess)
        status |= st1 & Status.UNWRAP

        W, lam_pred, wscale = _weighting(lv - lv[thru], gamma1)
        M, R = _measurement_products(T_all)
        Fm = M @ (W @ R)
        Fv = np.where(singular[:, None, None], np.eye(4), d.val(Fm))
        scale = _degeneracy_scale(d.val(M), d.val(R), wscale)
        targets, nominal, degenerate = _select_eigs(Fv, lam_pred, scale)
        status[degenerate] |= Status.DEGENERATE
        alpha, beta, a_p, b_p, lam = _normalized_from_F(Fm, targets, nominal)
        gamma, E, unwrap_bad = _gamma_fit(T_all, alpha, beta, a_p, b_p, lengths, thru, gamma1)
        status[unwrap_bad] |= Status.UNWRAP
        A, B, k, refl, ambiguous, inconsistent = _denormalize(
            E, alpha, beta, a_p, b_p, gamma, lengths, thru, S_reflect, reflect_ratio, reflect_estimate
        )
    status[ambiguous] |= Status.AMBIGUOUS_SIGN
    status[inconsistent] |= Status.INCONSISTENT_REFLECT
    return dict(
        alpha=alpha, beta=beta, a_p=a_p, b_p=b_p, lambd=lam, gamma=gamma, A=A, B=B, k=k,
        gamma_reflect=refl, W=W, status=status, thru=thru, gamma_seed=gamma1,
    )


def _line_stack(cal_set):
    return np.stack([ln.measurement.t for ln in cal_set.lines], axis=1)


def calibrate(cal_set: CalibrationSet, strict=False) -> CalibrationResult:
    """Run the multiline TRL pipeline at every frequency.

    Frequencies that cannot be calibrated are flagged in ``result.status``;
    with ``strict=True`` they raise :class:`CalibrationError` instead.
    """
    out = _core(
        cal_set.grid.points,
        _line_stack(cal_set),
        cal_set.lengths,
        cal_set.reflect.measurement.s,
        1.0,
        cal_set.reflect.estimate,
        cal_set.ereff_guess,
    )
    res = CalibrationResult(
        grid=cal_set.grid,
        A=out["A"],
        B=out["B"],
        k=out["k"],
        gamma=out["gamma"],
        gamma_reflect=out["gamma_reflect"],
        normalized=NormalizedX(out["alpha"], out["beta"], out["a_p"], out["b_p"], out["lambd"]),
        weighting=out["W"],
        status=out["status"],
        thru_index=out["thru"],
        lengths=cal_set.lengths,
    )
    if strict and res.issues:
        raise CalibrationError(res.issues)
    return res


def _apply(A, B, k, T_raw):
    T = inv2(A) @ T_raw @ inv2(B) / k[..., None, None]
    return t_to_s(T)


def apply_calibration(result: CalibrationResult, raw_dut: TwoPortNetwork) -> TwoPortNetwork:
    """Correct a raw two-port measurement: ``T = A^-1 (M / k) B^-1``."""
    if raw_dut.grid != result.grid:
        raise GridMismatchError("DUT grid differs from calibration grid")
    with np.errstate(all="ignore"):
        s = _apply(result.A, result.B, result.k, raw_dut.t)
    s = np.where(result.ok[:, None, None], s, np.nan)
    return _nan_network(result.grid, s)


def _nan_network(grid, s):
    # TwoPortNetwork rejects non-finite data; failed frequencies become NaN via a bypass
    net = object.__new__(TwoPortNetwork)
    object.__setattr__(net, "grid", grid)
    s = np.array(s, dtype=complex)
    s.setflags(write=False)
    object.__setattr__(net, "data", s)
    object.__setattr__(net, "rep", "S")
    object.__setattr__(net, "z0", 50.0)
    return net


def denormalize(xn: NormalizedX, thru: LineStandard, reflect: ReflectStandard, gamma, f_index=None):
    """Recover ``A, B, k`` and the solved reflect from a normalized solution.

    ``gamma`` is needed only when the thru has nonzero length.  Arrays in
    ``xn`` may be per-frequency; ``f_index`` selects one point.
    """
    sl = slice(None) if f_index is None else slice(f_index, f_index + 1)
    T_thru = thru.measurement.t[sl][:, None]  # (F, 1, 2, 2)
    alpha, beta, a_p, b_p = (np.atleast_1d(np.asarray(x))[sl] if np.ndim(x) else np.atleast_1d(x)
                             for x in (xn.alpha, xn.beta, xn.a_p, xn.b_p))
    one = np.ones(alpha.shape)
    An_inv = inv2(np.stack([np.stack([one, a_p], -1), np.stack([alpha, one], -1)], -2))
    Bn_inv = inv2(np.stack([np.stack([one, beta], -1), np.stack([b_p, one], -1)], -2))
    E = An_inv[:, None] @ T_thru @ Bn_inv[:, None]
    gamma = np.atleast_1d(np.asarray(gamma, dtype=complex))
    gamma = gamma[sl] if gamma.size > 1 else gamma
    A, B, k, refl, ambiguous, inconsistent = _denormalize(
        E, alpha, beta, a_p, b_p, gamma, np.array([thru.length]), 0,
        reflect.measurement.s[sl], 1.0, reflect.estimate,
    )
    from .errors import AmbiguousSignError, InconsistentReflectError

    if np.any(ambiguous):
        raise AmbiguousSignError("both square-root branches are compatible with the reflect estimate")
    if np.any(inconsistent):
        raise InconsistentReflectError("solved reflect magnitude exceeds 1.5")
    if f_index is not None:
        return A[0], B[0], k[0], refl[0]
    return A, B, k, refl


def extract_gamma(cal_set: CalibrationSet, xn: NormalizedX, seed):
    """Propagation constant from a normalized solution (weighted LS over lines)."""
    lv = cal_set.lengths
    thru = int(np.argmin(lv))
    gamma, _, bad = _gamma_fit(_line_stack(cal_set), xn.alpha, xn.beta, xn.a_p, xn.b_p, lv, thru, seed)
    return gamma
