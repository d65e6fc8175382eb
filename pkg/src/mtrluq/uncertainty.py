"""First-order (linear) uncertainty propagation through the calibration.

All uncertain inputs are real scalars collected in a :class:`ParamRegistry`.
Per frequency the layout is::

    line i S-parameters   8 per line   (Re, Im of S11, S21, S12, S22)
    reflect S-parameters  8
    line lengths          N
    reflect asymmetry     4            (Re, Im of Gamma_a and Gamma_b)

Covariances are kept per source group so that the output variance can be
split into a budget.  One forward-mode pass of the calibration (dual numbers,
batched over frequency) yields the Jacobian of every output with respect to
every parameter; the output covariance is ``J Sigma J^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual as d
from .errors import ConfigError, MissingNominalCalibrationError
from .rfcore import TwoPortNetwork, s_to_t, t_to_s
from .solver import (
    C0,
    CalibrationResult,
    CalibrationSet,
    _apply,
    _core,
    calibrate,
)
from .synth import mismatched_line_t

GROUPS = ("measurement", "inverse_model", "length", "reflect")
# order of S entries in every 8-vector
S_ENTRIES = ((0, 0), (1, 0), (0, 1), (1, 1))
S_NAMES = ("S11", "S21", "S12", "S22")


def _s_to_real8(s):
    """``(..., 2, 2)`` complex -> ``(..., 8)`` real (Re, Im per entry)."""
    parts = []
    for r, c in S_ENTRIES:
        parts += [d.real(s[..., r, c]), d.imag(s[..., r, c])]
    return d.stack(parts, axis=-1)


def _check_psd(cov, name, tol=1e-12):
    cov = np.asarray(cov, dtype=float)
    if not np.all(np.isfinite(cov)):
        raise ConfigError(f"{name}: covariance is not finite")
    if np.max(np.abs(cov - np.swapaxes(cov, -1, -2)), initial=0) > tol * max(np.max(np.abs(cov), initial=0), 1e-300):
        raise ConfigError(f"{name}: covariance is not symmetric")
    ev = np.linalg.eigvalsh(0.5 * (cov + np.swapaxes(cov, -1, -2)))
    scale = np.max(np.abs(ev), axis=-1, keepdims=True)
    if np.any(ev < -1e-10 * np.maximum(scale, 1e-300)):
        raise ConfigError(f"{name}: covariance is not positive semidefinite")
    return cov


class ParamRegistry:
    """Real input parameters with per-group covariance, per frequency."""

    def __init__(self, cal_set: CalibrationSet, cal0: CalibrationResult | None = None):
        self.cal_set = cal_set
        self.cal0 = calibrate(cal_set) if cal0 is None else cal0
        self.n_lines = len(cal_set.lines)
        self.n_freq = len(cal_set.grid)
        names = []
        for i in range(self.n_lines):
            names += [f"line{i}.{s}.{p}" for s in S_NAMES for p in ("re", "im")]
        names += [f"reflect.{s}.{p}" for s in S_NAMES for p in ("re", "im")]
        names += [f"length{i}" for i in range(self.n_lines)]
        names += ["gamma_a.re", "gamma_a.im", "gamma_b.re", "gamma_b.im"]
        self.names = tuple(names)
        P = len(names)
        # finite-difference scale: S and Gamma are O(1), lengths in metres
        self.scale = np.ones(P)
        self.scale[self.length_slice] = 1e-3
        self.terms = {g: np.zeros((self.n_freq, P, P)) for g in GROUPS}
        # square-root factors (index array, G) with block = G G^T; propagating
        # J G keeps every group's contribution non-negative under rounding
        self.factors = {g: [] for g in GROUPS}

    # -- layout ----------------------------------------------------------------
    @property
    def n_params(self):
        return len(self.names)

    def line_slice(self, i):
        return slice(8 * i, 8 * i + 8)

    @property
    def reflect_slice(self):
        return slice(8 * self.n_lines, 8 * self.n_lines + 8)

    @property
    def length_slice(self):
        o = 8 * self.n_lines + 8
        return slice(o, o + self.n_lines)

    @property
    def gamma_slice(self):
        o = 9 * self.n_lines + 8
        return slice(o, o + 4)

    @property
    def nominal_reflect(self):
        """Solved reflect coefficient, the nominal value of both ports."""
        return np.asarray(self.cal0.gamma_reflect)

    # -- covariance ------------------------------------------------------------
    def add(self, group, sl, cov):
        """Add a ``(F, n, n)`` (or ``(n, n)``) block for ``group`` at slice ``sl``."""
        if group not in self.terms:
            raise ConfigError(f"unknown uncertainty group {group!r}")
        self._add(group, np.arange(sl.start, sl.stop), cov, f"{group}[{sl.start}:{sl.stop}]")

    def _add(self, group, idx, cov, label):
        n = len(idx)
        cov = np.broadcast_to(np.asarray(cov, dtype=float), (self.n_freq, n, n))
        cov = _check_psd(cov, label)
        if not np.any(cov):
            return
        self.terms[group][:, idx[:, None], idx[None, :]] += cov
        ev, V = np.linalg.eigh(0.5 * (cov + np.swapaxes(cov, -1, -2)))
        self.factors[group].append((idx, V * np.sqrt(np.clip(ev, 0, None))[..., None, :]))

    def add_named(self, group, names, cov):
        """Add a covariance over parameters given by name (any subset, any order)."""
        index = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise ConfigError(f"unknown parameter names: {missing[:5]}")
        idx = np.array([index[n] for n in names])
        if len(set(idx.tolist())) != len(idx):
            raise ConfigError("duplicate parameter names in covariance")
        self._add(group, idx, cov, group)

    def covariance(self, groups=None):
        groups = GROUPS if groups is None else groups
        return sum(self.terms[g] for g in groups)

    def _group_covariance(self, J, group):
        """``J Sigma_g J^T`` via the square-root factors; ``J`` is ``(F, m, P)``."""
        m = J.shape[-2]
        out = np.zeros(J.shape[:-1] + (m,))
        for idx, G in self.factors[group]:
            JG = J[..., idx] @ G
            out += JG @ np.swapaxes(JG, -1, -2)
        return out


def register_measurement_noise(reg: ParamRegistry, sigma=0.0, cov=None, reflect=True):
    """Additive noise on raw S-parameters.

    ``sigma`` is the standard deviation of each *complex* entry (circular, so
    ``sigma**2 / 2`` per real component).  Alternatively ``cov`` gives an
    explicit ``(F, 8, 8)`` or ``(8, 8)`` covariance used for every standard.
    """
    if cov is None:
        if sigma < 0:
            raise ConfigError("sigma must be >= 0")
        cov = np.eye(8) * sigma**2 / 2
    targets = [reg.line_slice(i) for i in range(reg.n_lines)]
    if reflect:
        targets.append(reg.reflect_slice)
    for sl in targets:
        reg.add("measurement", sl, cov)
    return reg


def register_forward_model(reg: ParamRegistry, sigma_length=0.0, sigma_reflect=0.0):
    """Uncertain declared lengths and a possibly asymmetric reflect.

    ``sigma_reflect`` is the complex standard deviation of each port's
    reflect, independently; a common deviation of both ports has no effect.
    """
    if sigma_length < 0 or sigma_reflect < 0:
        raise ConfigError("standard deviations must be >= 0")
    reg.add("length", reg.length_slice, np.eye(reg.n_lines) * sigma_length**2)
    reg.add("reflect", reg.gamma_slice, np.eye(4) * sigma_reflect**2 / 2)
    return reg


def inverse_model_sensitivity(reg: ParamRegistry, cal0: CalibrationResult, z0_line=50.0, z_ref=50.0):
    """``d S_meas / d delta_er`` per line, shape ``(N, F, 8)``, and the ``ereff`` estimate.

    The mismatch model is evaluated with the calibrated error boxes and
    propagation constant, so no ground truth is required.
    """
    f = cal0.f
    gamma = np.asarray(cal0.gamma)
    er = (C0 * gamma.imag / (2 * np.pi * f)) ** 2
    delta = d.seed(np.zeros(len(f)), np.ones((1, len(f))))  # one parameter shared by all points
    out = []
    for ln in reg.cal_set.lines:
        T = mismatched_line_t(f, gamma, er, ln.length, delta, z0_line, z_ref)
        Tm = cal0.k[:, None, None] * (cal0.A @ T @ cal0.B)
        s8 = _s_to_real8(t_to_s(Tm))
        out.append(np.real(s8.grad[0]))
    return np.stack(out), er


def register_inverse_model(reg: ParamRegistry, cal0: CalibrationResult | None, sigma_rel=0.0,
                           z0_line=50.0, z_ref=50.0):
    """Model error from per-line permittivity variation (relative ``sigma_rel``)."""
    if cal0 is None:
        raise MissingNominalCalibrationError("inverse-model uncertainty needs a nominal calibration")
    if sigma_rel < 0:
        raise ConfigError("sigma_rel must be >= 0")
    if sigma_rel == 0:
        return reg
    J, er = inverse_model_sensitivity(reg, cal0, z0_line, z_ref)
    sig = sigma_rel * er  # absolute, per frequency
    for i in range(reg.n_lines):
        cov = sig[:, None, None] ** 2 * J[i][:, :, None] * J[i][:, None, :]
        reg.add("inverse_model", reg.line_slice(i), cov)
    return reg


# -- evaluation ----------------------------------------------------------------

def _inputs(reg: ParamRegistry, offsets=None):
    """Calibration inputs, either seeded duals (``offsets=None``) or offset values.

    ``offsets`` has shape ``(F, P)`` in parameter units.
    """
    cs = reg.cal_set
    Fn, N, P = reg.n_freq, reg.n_lines, reg.n_params
    S = np.stack([ln.measurement.s for ln in cs.lines], axis=1)  # (F, N, 2, 2)
    Sr = cs.reflect.measurement.s
    L = np.broadcast_to(cs.lengths, (Fn, N)).astype(float)
    g0 = reg.nominal_reflect

    if offsets is not None:
        S = S.copy()
        Sr = Sr.copy()
        for i in range(N):
            o = offsets[:, reg.line_slice(i)]
            for e, (r, c) in enumerate(S_ENTRIES):
                S[:, i, r, c] += o[:, 2 * e] + 1j * o[:, 2 * e + 1]
        o = offsets[:, reg.reflect_slice]
        for e, (r, c) in enumerate(S_ENTRIES):
            Sr[:, r, c] += o[:, 2 * e] + 1j * o[:, 2 * e + 1]
        L = L + offsets[:, reg.length_slice]
        o = offsets[:, reg.gamma_slice]
        ratio = (g0 + o[:, 2] + 1j * o[:, 3]) / (g0 + o[:, 0] + 1j * o[:, 1])
        return S, Sr, L, ratio

    gS = np.zeros((P, Fn, N, 2, 2), dtype=complex)
    for i in range(N):
        base = reg.line_slice(i).start
        for e, (r, c) in enumerate(S_ENTRIES):
            gS[base + 2 * e, :, i, r, c] = 1
            gS[base + 2 * e + 1, :, i, r, c] = 1j
    gR = np.zeros((P, Fn, 2, 2), dtype=complex)
    base = reg.reflect_slice.start
    for e, (r, c) in enumerate(S_ENTRIES):
        gR[base + 2 * e, :, r, c] = 1
        gR[base + 2 * e + 1, :, r, c] = 1j
    gL = np.zeros((P, Fn, N))
    for i in range(N):
        gL[reg.length_slice.start + i, :, i] = 1
    gG = np.zeros((P, Fn), dtype=complex)
    gs = reg.gamma_slice.start
    ga = d.seed(g0, _unit(gG, gs, gs + 1))
    gb = d.seed(g0, _unit(gG, gs + 2, gs + 3))
    return d.seed(S, gS), d.seed(Sr, gR), d.seed(L, gL), gb / ga


def _unit(template, i_re, i_im):
    g = np.zeros_like(template)
    g[i_re] = 1
    g[i_im] = 1j
    return g


def _outputs(f, out, raw_t):
    gamma = out["gamma"]
    ereff = -((C0 / (2 * np.pi * f)) * gamma) ** 2
    s = _apply(out["A"], out["B"], out["k"], raw_t)
    res = {
        "gamma": d.stack([d.real(gamma), d.imag(gamma)], axis=-1),
        "ereff": d.stack([d.real(ereff)], axis=-1),
        "loss_db_per_m": d.stack([20 / np.log(10) * d.real(gamma)], axis=-1),
        "loss_db_per_mm": d.stack([20e-3 / np.log(10) * d.real(gamma)], axis=-1),
        "s_dut": _s_to_real8(s),
        "s11_mag": d.stack([d.absolute(s[..., 0, 0])], axis=-1),
        "s21_mag": d.stack([d.absolute(s[..., 1, 0])], axis=-1),
    }
    return res


OUTPUT_COMPONENTS = {
    "gamma": ("re", "im"),
    "ereff": ("re",),
    "loss_db_per_m": ("value",),
    "loss_db_per_mm": ("value",),
    "s_dut": tuple(f"{s}.{p}" for s in S_NAMES for p in ("re", "im")),
    "s11_mag": ("value",),
    "s21_mag": ("value",),
}


def _evaluate(reg: ParamRegistry, raw_dut: TwoPortNetwork | None, offsets=None):
    cs = reg.cal_set
    S, Sr, L, ratio = _inputs(reg, offsets)
    with np.errstate(all="ignore"):
        out = _core(cs.grid.points, s_to_t(S), L, Sr, ratio, cs.reflect.estimate, cs.ereff_guess)
        raw_t = (raw_dut if raw_dut is not None else cs.lines[0].measurement).t
        res = _outputs(cs.grid.points, out, raw_t)
    return res, out


@dataclass
class UncertainOutput:
    """Nominal value, covariance and per-group variance budget of one output."""

    name: str
    components: tuple
    nominal: np.ndarray  # (F, m)
    covariance: np.ndarray  # (F, m, m)
    budget: dict = field(default_factory=dict)  # group -> (F, m) variances
    jacobian: np.ndarray | None = None  # (F, m, P)

    @property
    def std(self):
        return np.sqrt(np.clip(np.diagonal(self.covariance, axis1=-2, axis2=-1), 0, None))


@dataclass
class PropagationResult:
    calibration: CalibrationResult
    outputs: dict
    status: np.ndarray

    def __getitem__(self, name):
        return self.outputs[name]


def jacobians(reg: ParamRegistry, raw_dut=None):
    """Analytic Jacobians ``{name: (F, m, P)}`` and nominal values."""
    res, out = _evaluate(reg, raw_dut)
    jac = {k: np.moveaxis(np.real(v.grad), 0, -1) for k, v in res.items()}
    nominal = {k: np.real(v.value) for k, v in res.items()}
    return jac, nominal, out


def propagate(reg: ParamRegistry, raw_dut: TwoPortNetwork | None = None) -> PropagationResult:
    """Linear propagation of every registered covariance term.

    ``raw_dut`` is the uncorrected DUT measurement (treated as exact); when
    omitted the DUT outputs refer to the first line standard.
    """
    jac, nominal, out = jacobians(reg, raw_dut)
    outputs = {}
    for name, J in jac.items():
        parts = {g: reg._group_covariance(J, g) for g in GROUPS}
        cov = sum(parts[g] for g in GROUPS)
        budget = {g: np.diagonal(parts[g], axis1=-2, axis2=-1).copy() for g in GROUPS}
        outputs[name] = UncertainOutput(name, OUTPUT_COMPONENTS[name], nominal[name], cov, budget, J)
    return PropagationResult(reg.cal0, outputs, np.asarray(out["status"]))


def fd_jacobian(reg: ParamRegistry, raw_dut=None, step=1e-7, params=None):
    """Central-difference Jacobians, perturbing one parameter at all frequencies.

    Steps are ``step * reg.scale[p]``.  Returns ``{name: (F, m, P)}``.
    """
    P = reg.n_params
    params = range(P) if params is None else params
    res0, _ = _evaluate(reg, raw_dut, np.zeros((reg.n_freq, P)))
    jac = {k: np.full(np.shape(v) + (P,), np.nan) for k, v in res0.items()}
    for p in params:
        h = step * reg.scale[p]
        o = np.zeros((reg.n_freq, P))
        o[:, p] = h
        plus, _ = _evaluate(reg, raw_dut, o)
        minus, _ = _evaluate(reg, raw_dut, -o)
        for k in jac:
            jac[k][..., p] = np.real(plus[k] - minus[k]) / (2 * h)
    return jac
