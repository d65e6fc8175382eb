"""Seeded Monte Carlo replication of the calibration, and LU/MC comparison.

Every trial draws its perturbations from its own stream,
``SeedSequence(seed, spawn_key=(i,))``, so results do not depend on the
order or the number of worker processes.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GridMismatchError, MonteCarloAbort
from .solver import HARD_FAILURE, calibrate
from .synth import Perturbation, SynthScenario, generate, make_dut_lossless_symmetric, make_error_boxes
from .uncertainty import OUTPUT_COMPONENTS, _outputs

MIN_TRIALS_FOR_VERDICT = 100
MAX_FAILURE_FRACTION = 0.01
RATIO_BAND = (0.85, 1.15)
REQUIRED_FRACTION = 0.9
COMPARED = ("ereff", "loss_db_per_m", "s11_mag", "s21_mag")


@dataclass(frozen=True)
class MCScenario:
    """Synthetic scenario plus input distributions.

    ``sigma_add`` is the std of each complex noise sample (circular);
    ``sigma_er_rel`` is relative to the nominal ``ereff``.
    """

    synth: SynthScenario = field(default_factory=SynthScenario)
    trials: int = 1000
    seed: int = 0
    sigma_add: float = 0.0
    sigma_length: float = 0.0
    sigma_reflect: float = 0.0
    sigma_er_rel: float = 0.0
    shared_er: bool = False

    def __post_init__(self):
        if self.trials < 2:
            raise ConfigError("trials must be >= 2")
        for name in ("sigma_add", "sigma_length", "sigma_reflect", "sigma_er_rel"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


def flatten_outputs(res):
    """``{name: (F, m)}`` -> ``{"name" or "name.comp": (F,)}`` in a fixed order."""
    flat = {}
    for name, comps in OUTPUT_COMPONENTS.items():
        v = np.asarray(res[name])
        if len(comps) == 1:
            flat[name] = v[..., 0]
        else:
            for j, c in enumerate(comps):
                flat[f"{name}.{c}"] = v[..., j]
    return flat


@dataclass
class MCResult:
    f: np.ndarray
    quantities: tuple
    nominal: dict  # name -> (F,)
    mean: dict
    std: dict
    counts: np.ndarray  # successful trials per frequency
    trials: int
    failures: int  # trials with at least one failed frequency
    seconds: float
    samples: dict | None = None  # name -> (trials, F)


def _draw(rng, mc: MCScenario, n_lines, n_freq):
    # fixed draw order keeps streams reproducible
    sc = mc.synth
    dl = rng.normal(0.0, 1.0, n_lines) * mc.sigma_length
    if mc.shared_er:
        der = np.full(n_lines, rng.normal()) * mc.sigma_er_rel * sc.ereff
    else:
        der = rng.normal(0.0, 1.0, n_lines) * mc.sigma_er_rel * sc.ereff
    s = mc.sigma_reflect / np.sqrt(2)
    ga = sc.reflect + s * complex(*rng.normal(size=2))
    gb = sc.reflect + s * complex(*rng.normal(size=2))
    s = mc.sigma_add / np.sqrt(2)
    n = rng.normal(size=(2, n_lines, n_freq, 2, 2))
    line_noise = s * (n[0] + 1j * n[1])
    n = rng.normal(size=(2, n_freq, 2, 2))
    reflect_noise = s * (n[0] + 1j * n[1])
    return Perturbation(dl, der, ga, gb, line_noise, reflect_noise)


def _one_trial(mc: MCScenario, boxes, dut, i):
    rng = np.random.default_rng(np.random.SeedSequence(mc.seed, spawn_key=(i,)))
    n_freq = len(mc.synth.grid)
    pert = _draw(rng, mc, len(mc.synth.lengths), n_freq)
    cs, raw, _ = generate(mc.synth, pert, boxes=boxes, dut=dut)
    return _evaluate_set(cs, raw)


def _evaluate_set(cs, raw):
    res = calibrate(cs)
    out = dict(A=res.A, B=res.B, k=res.k, gamma=res.gamma)
    with np.errstate(all="ignore"):
        flat = flatten_outputs(_outputs(cs.grid.points, out, raw.t))
    ok = (res.status & int(HARD_FAILURE)) == 0
    return {k: np.where(ok, v, np.nan) for k, v in flat.items()}, ok


def _run_chunk(args):
    mc, boxes, dut, indices = args
    return [_one_trial(mc, boxes, dut, i) for i in indices]


def thread_count(requested=None):
    """Worker processes: ``requested`` or ``MTRLUQ_THREADS``, at least 1."""
    if requested is None:
        env = os.environ.get("MTRLUQ_THREADS")
        if env is None:
            return 1
        try:
            requested = int(env)
        except ValueError as exc:
            raise ConfigError(f"MTRLUQ_THREADS must be an integer, got {env!r}") from exc
    return max(1, int(requested))


def run_mc(mc: MCScenario, threads=None, keep_samples=True) -> MCResult:
    """Run all trials and aggregate mean and std (``ddof=1``) per frequency."""
    t0 = time.perf_counter()
    boxes = make_error_boxes(mc.synth)
    grid = mc.synth.grid
    dut = make_dut_lossless_symmetric(grid)
    cs0, raw0, _ = generate(mc.synth, boxes=boxes, dut=dut)
    nominal, ok0 = _evaluate_set(cs0, raw0)

    workers = thread_count(threads)
    idx = np.arange(mc.trials)
    if workers == 1:
        results = _run_chunk((mc, boxes, dut, idx))
    else:
        chunks = [c for c in np.array_split(idx, workers * 4) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [r for part in ex.map(_run_chunk, [(mc, boxes, dut, c) for c in chunks]) for r in part]

    names = tuple(nominal)
    oks = np.stack([r[1] for r in results])  # (trials, F)
    failures = int(np.count_nonzero(~np.all(oks, axis=1)))
    if failures > MAX_FAILURE_FRACTION * mc.trials:
        bad = np.flatnonzero(~np.all(oks, axis=0))
        raise MonteCarloAbort(
            f"{failures} of {mc.trials} trials failed (limit {MAX_FAILURE_FRACTION:.0%}); "
            f"affected frequency indices: {bad[:10].tolist()}"
        )
    samples = {k: np.stack([r[0][k] for r in results]) for k in names}
    counts = oks.sum(axis=0)
    with np.errstate(all="ignore"):
        mean = {k: np.nanmean(v, axis=0) for k, v in samples.items()}
        std = {k: np.nanstd(v, axis=0, ddof=1) for k, v in samples.items()}
    return MCResult(
        f=grid.points.copy(),
        quantities=names,
        nominal=nominal,
        mean=mean,
        std=std,
        counts=counts,
        trials=mc.trials,
        failures=failures,
        seconds=time.perf_counter() - t0,
        samples=samples if keep_samples else None,
    )


@dataclass
class Comparison:
    f: np.ndarray
    ratio: dict  # name -> (F,) LU std / MC std
    fraction_in_band: dict
    verdict: str  # "pass", "fail" or "insufficient trials"
    trials: int
    speedup: float | None = None
    band: tuple = RATIO_BAND
    required: float = REQUIRED_FRACTION

    def as_dict(self):
        return {
            "verdict": self.verdict,
            "trials": self.trials,
            "band": list(self.band),
            "required_fraction": self.required,
            "fraction_in_band": {k: float(v) for k, v in self.fraction_in_band.items()},
            "speedup": None if self.speedup is None else float(self.speedup),
        }


def lu_std_flat(prop):
    """Flatten a :class:`~mtrluq.uncertainty.PropagationResult` like MC outputs."""
    return flatten_outputs({k: v.std for k, v in prop.outputs.items()})


def compare_lu_mc(mc: MCResult, lu_std: dict, f=None, quantities=COMPARED, lu_seconds=None,
                  band=RATIO_BAND, required=REQUIRED_FRACTION) -> Comparison:
    """Ratio curves ``LU std / MC std`` and a machine-readable verdict.

    ``lu_std`` maps flattened quantity names to ``(F,)`` arrays, e.g. from
    :func:`lu_std_flat`.
    """
    if f is not None and (np.shape(f) != mc.f.shape or not np.allclose(f, mc.f, rtol=1e-12, atol=0)):
        raise GridMismatchError("LU and MC results use different frequency grids")
    ratio, frac = {}, {}
    for q in quantities:
        with np.errstate(all="ignore"):
            r = np.asarray(lu_std[q]) / mc.std[q]
        # both at roundoff level counts as agreement
        floor = 1e-12 * np.maximum(np.abs(mc.nominal[q]), 1.0)
        r = np.where((np.asarray(lu_std[q]) <= floor) & (mc.std[q] <= floor), 1.0, r)
        ratio[q] = r
        frac[q] = float(np.mean((r >= band[0]) & (r <= band[1])))
    if mc.trials < MIN_TRIALS_FOR_VERDICT:
        verdict = "insufficient trials"
    else:
        verdict = "pass" if all(v >= required for v in frac.values()) else "fail"
    speedup = None if not lu_seconds else mc.seconds / lu_seconds
    return Comparison(mc.f, ratio, frac, verdict, mc.trials, speedup, band, required)


def run_lu(mc: MCScenario, inverse_model=True):
    """Linear propagation for the same scenario; returns ``(result, seconds)``."""
    from .uncertainty import (
        ParamRegistry,
        propagate,
        register_forward_model,
        register_inverse_model,
        register_measurement_noise,
    )

    t0 = time.perf_counter()
    boxes = make_error_boxes(mc.synth)
    cs, raw, _ = generate(mc.synth, boxes=boxes)
    reg = ParamRegistry(cs)
    register_measurement_noise(reg, mc.sigma_add)
    register_forward_model(reg, mc.sigma_length, mc.sigma_reflect)
    if inverse_model and not mc.shared_er:
        register_inverse_model(reg, reg.cal0, mc.sigma_er_rel, mc.synth.z0_line, mc.synth.z_ref)
    prop = propagate(reg, raw)
    return prop, time.perf_counter() - t0
