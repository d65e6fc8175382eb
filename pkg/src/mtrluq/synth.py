"""Synthetic coplanar-waveguide calibration data with known ground truth.

Lines follow a quasi-TEM model: ``ereff`` constant, conductor-type loss that
grows with ``sqrt(f)``.  A relative-permittivity offset ``delta`` changes the
phase constant and the line impedance ``Z1 = Z0 (er / (er + delta))**0.25``,
so a perturbed line is embedded between two impedance steps.  The same model
serves the Monte Carlo generator and the inverse-model sensitivity.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import dual as d
from .errors import ConfigError, GridMismatchError
from .rfcore import FrequencyGrid, TwoPortNetwork, s_to_t, t_to_s
from .solver import C0, CalibrationSet, LineStandard, ReflectStandard
from .touchstone import read_touchstone

NEPER_PER_DB = np.log(10) / 20


@dataclass(frozen=True)
class SynthScenario:
    """Scenario definition; lengths in metres, frequencies in Hz."""

    f_start: float = 1e9
    f_stop: float = 150e9
    n_points: int = 150
    lengths: tuple = (0.0, 0.5e-3, 2.5e-3, 5.0e-3, 8.5e-3)
    ereff: float = 5.0
    loss_db_per_m_sqrt_ghz: float = 50.0
    z0_line: float = 50.0
    z_ref: float = 50.0
    reflect: complex = -1.0
    reflect_estimate: complex = -1.0
    ereff_guess: float = 4.5
    seed: int = 42
    error_box_a: str | None = None
    error_box_b: str | None = None
    k: complex | None = None
    frequencies: tuple | None = None  # explicit points override the linear range

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        if self.frequencies is not None:
            object.__setattr__(self, "frequencies", tuple(float(x) for x in self.frequencies))
        object.__setattr__(self, "reflect", complex(self.reflect))
        object.__setattr__(self, "reflect_estimate", complex(self.reflect_estimate))
        if self.n_points < 1 or not 0 < self.f_start <= self.f_stop:
            raise ConfigError("frequency range must satisfy 0 < f_start <= f_stop, n_points >= 1")
        if self.n_points > 1 and self.f_start == self.f_stop:
            raise ConfigError("f_start == f_stop requires n_points == 1")
        if len(self.lengths) < 2 or min(self.lengths) < 0:
            raise ConfigError("need at least two non-negative line lengths")
        if self.ereff <= 0 or self.ereff_guess <= 0:
            raise ConfigError("ereff and ereff_guess must be > 0")
        if self.loss_db_per_m_sqrt_ghz < 0:
            raise ConfigError("loss must be >= 0")

    @property
    def grid(self):
        if self.frequencies is not None:
            return FrequencyGrid(np.array(self.frequencies))
        return FrequencyGrid.linear(self.f_start, self.f_stop, self.n_points)

    def with_frequencies(self, f):
        """Copy evaluated at explicit frequency points."""
        return replace(self, frequencies=tuple(float(x) for x in f))


def scenario_grid(sc: SynthScenario) -> FrequencyGrid:
    return sc.grid


@dataclass
class Perturbation:
    """Deviations applied to the truth of one synthetic experiment.

    ``length_offsets`` and ``delta_er`` hold one entry per line; the reflect
    standard may differ between the two ports; ``line_noise`` has shape
    ``(N, F, 2, 2)`` and ``reflect_noise`` ``(F, 2, 2)`` (added to raw S).
    """

    length_offsets: np.ndarray | None = None
    delta_er: np.ndarray | None = None
    reflect_a: complex | None = None
    reflect_b: complex | None = None
    line_noise: np.ndarray | None = None
    reflect_noise: np.ndarray | None = None


@dataclass(frozen=True)
class ErrorBoxes:
    A: np.ndarray  # (F, 2, 2) T-parameters
    B: np.ndarray
    k: np.ndarray  # (F,)


@dataclass(frozen=True)
class GroundTruth:
    """Truth normalized like the solver output: ``a22 = b22 = 1``."""

    grid: FrequencyGrid
    A: np.ndarray
    B: np.ndarray
    k: np.ndarray
    gamma: np.ndarray
    ereff: np.ndarray
    dut_s: np.ndarray
    reflect: complex


# -- line physics -------------------------------------------------------------

def attenuation(f, loss_db_per_m_sqrt_ghz):
    """Attenuation constant in Np/m."""
    return NEPER_PER_DB * loss_db_per_m_sqrt_ghz * np.sqrt(np.asarray(f) / 1e9)


def gamma_model(f, ereff, loss_db_per_m_sqrt_ghz, delta_er=0.0):
    """``alpha + j beta`` with ``beta = 2 pi f sqrt(ereff + delta) / c0``.

    ``delta_er`` may be a dual number; the loss term does not depend on it.
    """
    f = np.asarray(f, dtype=float)
    beta = (2 * np.pi * f / C0) * d.sqrt(ereff + delta_er * np.ones_like(f))
    return attenuation(f, loss_db_per_m_sqrt_ghz) + 1j * beta


def line_impedance(z0_line, ereff, delta_er=0.0):
    return z0_line * (ereff / (ereff + delta_er)) ** 0.25


def pad_t(rho):
    """Impedance step from the reference to a line with reflection ``rho``."""
    one = np.ones(np.shape(d.val(rho)))
    m = d.stack([d.stack([one, rho], -1), d.stack([rho, one], -1)], -2)
    return m / d.sqrt(1 - rho * rho)[..., None, None]


def line_t(gamma, length):
    """Matched line ``diag(exp(-gamma l), exp(gamma l))``; dual-friendly."""
    e = d.exp(-gamma * length)
    zero = np.zeros(np.shape(d.val(e)))
    return d.stack([d.stack([e, zero], -1), d.stack([zero, 1 / e], -1)], -2)


def mismatched_line_t(f, gamma0, ereff, length, delta_er, z0_line, z_ref):
    """Line of permittivity ``ereff + delta`` between reference-impedance pads.

    ``gamma0`` is the unperturbed propagation constant; its real part is kept.
    """
    f = np.asarray(f, dtype=float)
    gamma = d.real(gamma0) + 1j * (2 * np.pi * f / C0) * d.sqrt(ereff + delta_er * np.ones_like(f))
    z1 = line_impedance(z0_line, ereff, delta_er)
    rho = (z1 - z_ref) / (z1 + z_ref) * np.ones_like(f)
    P = pad_t(rho)
    Pinv = pad_t(-rho)
    return P @ line_t(gamma, length) @ Pinv


def embed(boxes: ErrorBoxes, T):
    """Raw measurement ``k A T B`` (T-parameters)."""
    return boxes.k[..., None, None] * (boxes.A @ T @ boxes.B)


def reflect_measurement(A, B, gamma_a, gamma_b):
    """One-port readings of the reflect through each error box, as an S-matrix."""
    ga = (A[..., 0, 0] * gamma_a + A[..., 0, 1]) / (A[..., 1, 0] * gamma_a + A[..., 1, 1])
    gb = (gamma_b * B[..., 0, 0] - B[..., 1, 0]) / (B[..., 1, 1] - gamma_b * B[..., 0, 1])
    z = np.zeros(np.shape(d.val(ga)))
    return d.stack([d.stack([ga, z], -1), d.stack([z, gb], -1)], -2)


# -- error boxes ---------------------------------------------------------------

def _rational_box(rng, f):
    """Smooth, non-reciprocal S-parameter error box."""
    fz = rng.uniform(20e9, 80e9, size=2)
    r0 = rng.uniform(0.05, 0.2, size=2) * np.exp(1j * rng.uniform(0, 2 * np.pi, size=2))
    c0 = rng.uniform(0.01, 0.05, size=2) * np.exp(1j * rng.uniform(0, 2 * np.pi, size=2))
    s11 = r0[0] * (1j * f / fz[0]) / (1 + 1j * f / fz[0]) + c0[0]
    s22 = r0[1] * (1j * f / fz[1]) / (1 + 1j * f / fz[1]) + c0[1]
    tau = rng.uniform(0.7, 1.0, size=2)
    delay = rng.uniform(5e-12, 30e-12, size=2)
    fp = rng.uniform(200e9, 600e9, size=2)
    s21 = tau[0] * np.exp(-2j * np.pi * f * delay[0]) / (1 + 1j * f / fp[0])
    s12 = tau[1] * np.exp(-2j * np.pi * f * delay[1]) / (1 + 1j * f / fp[1])
    return np.stack([np.stack([s11, s12], -1), np.stack([s21, s22], -1)], -2)


def make_error_boxes(sc: SynthScenario, grid: FrequencyGrid | None = None) -> ErrorBoxes:
    """Seeded random error boxes, or boxes read from Touchstone files."""
    grid = scenario_grid(sc) if grid is None else grid
    f = grid.points
    rng = np.random.default_rng(sc.seed)
    sa = _rational_box(rng, f)
    sb = _rational_box(rng, f)
    k = rng.uniform(0.5, 2.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    for attr, slot in (("error_box_a", 0), ("error_box_b", 1)):
        path = getattr(sc, attr)
        if path is None:
            continue
        net = read_touchstone(path)
        if net.grid != grid:
            raise GridMismatchError(f"{path}: grid differs from scenario grid")
        if slot == 0:
            sa = net.s
        else:
            sb = net.s
    if sc.k is not None:
        k = complex(sc.k)
    return ErrorBoxes(s_to_t(sa), s_to_t(sb), np.full(len(f), k, dtype=complex))


def make_dut_lossless_symmetric(grid: FrequencyGrid) -> TwoPortNetwork:
    """Lossless, symmetric, reciprocal DUT: ``[[1, j], [j, 1]] / sqrt(2)``."""
    s = np.array([[1, 1j], [1j, 1]]) / np.sqrt(2)
    return TwoPortNetwork(grid, np.broadcast_to(s, (len(grid), 2, 2)))


# -- scenario generation -------------------------------------------------------

def generate(sc: SynthScenario, perturbation: Perturbation | None = None, boxes: ErrorBoxes | None = None,
             dut: TwoPortNetwork | None = None):
    """Build a calibration set, a raw DUT measurement and the ground truth.

    The returned :class:`CalibrationSet` always declares the nominal lengths;
    perturbations only affect the simulated measurements.
    """
    grid = scenario_grid(sc)
    f = grid.points
    boxes = make_error_boxes(sc, grid) if boxes is None else boxes
    p = perturbation or Perturbation()
    n = len(sc.lengths)
    dl = np.zeros(n) if p.length_offsets is None else np.asarray(p.length_offsets, dtype=float)
    der = np.zeros(n) if p.delta_er is None else np.asarray(p.delta_er, dtype=float)
    gamma0 = gamma_model(f, sc.ereff, sc.loss_db_per_m_sqrt_ghz)

    lines = []
    for i, l in enumerate(sc.lengths):
        if der[i] == 0 and sc.z0_line == sc.z_ref:
            T = line_t(gamma0, l + dl[i])
        else:
            T = mismatched_line_t(f, gamma0, sc.ereff, l + dl[i], der[i], sc.z0_line, sc.z_ref)
        s = t_to_s(embed(boxes, T))
        if p.line_noise is not None:
            s = s + p.line_noise[i]
        lines.append(LineStandard(l, TwoPortNetwork(grid, s)))

    ga = sc.reflect if p.reflect_a is None else p.reflect_a
    gb = sc.reflect if p.reflect_b is None else p.reflect_b
    sr = reflect_measurement(boxes.A, boxes.B, ga, gb)
    if p.reflect_noise is not None:
        sr = sr + p.reflect_noise
    reflect = ReflectStandard(TwoPortNetwork(grid, sr), sc.reflect_estimate)
    cal_set = CalibrationSet(tuple(lines), reflect, sc.ereff_guess)

    dut = make_dut_lossless_symmetric(grid) if dut is None else dut
    raw = TwoPortNetwork(grid, t_to_s(embed(boxes, dut.t)))

    a22 = boxes.A[:, 1, 1]
    b22 = boxes.B[:, 1, 1]
    truth = GroundTruth(
        grid=grid,
        A=boxes.A / a22[:, None, None],
        B=boxes.B / b22[:, None, None],
        k=boxes.k * a22 * b22,
        gamma=gamma0,
        ereff=-(C0 * gamma0 / (2 * np.pi * f)) ** 2,
        dut_s=dut.s,
        reflect=sc.reflect,
    )
    return cal_set, raw, truth


# -- configuration ---------------------------------------------------------------

def _load_mapping(path):
    ext = os.path.splitext(str(path))[1].lower()
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        if ext == ".json":
            return json.loads(raw)
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        return tomllib.loads(raw.decode())
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _complex_value(x, key):
    if isinstance(x, (int, float, complex)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigError(f"{key}: expected a complex number, [re, im] or a string like '-1+0j'")


def scenario_from_mapping(m, base=None):
    """Build a scenario from flat keys; unknown keys are rejected."""
    known = {f.name for f in fields(SynthScenario)}
    unknown = set(m) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    kw = {} if base is None else asdict(base)
    for key, value in m.items():
        if key in ("reflect", "reflect_estimate", "k"):
            value = None if value is None and key == "k" else _complex_value(value, key)
        kw[key] = value
    try:
        return SynthScenario(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path):
    return scenario_from_mapping(_load_mapping(path))
