"""Command line front-end: ``mtrluq {synth,calibrate,propagate,montecarlo,compare}``.

Exit codes: 0 success, 2 configuration/input error, 3 solver or propagation
failure, 4 failed LU/MC verdict with ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import (
    CalibrationError,
    ConfigError,
    GridMismatchError,
    MonteCarloAbort,
    MtrlError,
    TouchstoneParseError,
)
from .solver import CalibrationSet, LineStandard, ReflectStandard, apply_calibration, calibrate, describe_status
from .synth import _complex_value, _load_mapping, generate, scenario_from_mapping
from .touchstone import read_touchstone, write_touchstone

log = logging.getLogger("mtrluq")

CSV_VERSION = "v1"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERDICT = 0, 2, 3, 4
FAILURE_LIMIT = 0.10
PLOTTED = (
    ("ereff", "ereff (real part)", "ereff.svg"),
    ("loss_db_per_mm", "loss (dB/mm)", "loss.svg"),
    ("s11_mag", "|S11|", "s11_mag.svg"),
    ("s21_mag", "|S21|", "s21_mag.svg"),
)


class SolverFailure(MtrlError):
    pass


class VerdictFailure(MtrlError):
    pass


@dataclass
class RunConfig:
    """Validated run configuration; file keys map 1:1 onto these fields."""

    scenario: dict = field(default_factory=dict)
    standards: str | None = None
    sigma_add: float = 0.0
    sigma_length: float = 0.0
    sigma_reflect: float = 0.0
    sigma_er_rel: float = 0.0
    shared_er: bool = False
    inverse_model: bool = True
    z0_line: float = 50.0
    z_ref: float = 50.0
    covariance: str | None = None
    trials: int = 1000
    seed: int = 0
    lu_csv: str | None = None
    mc_csv: str | None = None

    def __post_init__(self):
        for name in ("sigma_add", "sigma_length", "sigma_reflect", "sigma_er_rel"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{name} must be a number >= 0")
        if not isinstance(self.trials, int) or self.trials < 2:
            raise ConfigError("trials must be an integer >= 2")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not isinstance(self.scenario, dict):
            raise ConfigError("scenario must be a table of scenario keys")

    @classmethod
    def load(cls, path=None, **overrides):
        data = {}
        base = os.getcwd()
        if path is not None:
            if not os.path.exists(path):
                raise ConfigError(f"config file not found: {path}")
            data = _load_mapping(path)
            base = os.path.dirname(os.path.abspath(path))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("standards", "covariance", "lu_csv", "mc_csv"):
            if isinstance(data.get(key), str):
                data[key] = os.path.join(base, data[key])
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def synth_scenario(self, seed=None):
        sc = scenario_from_mapping(self.scenario)
        if seed is not None:
            sc = scenario_from_mapping({"seed": seed}, base=sc)
        return sc


# -- CSV helpers ----------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_csv(path, kind, columns, rows, meta=None):
    meta = meta or {}
    head = " ".join([f"# mtrluq-csv {CSV_VERSION} kind={kind}"] + [f"{k}={v}" for k, v in meta.items()])
    with open(path, "w", newline="") as fh:
        fh.write(head + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path, kind=None):
    if not os.path.exists(path):
        raise ConfigError(f"CSV file not found: {path}")
    with open(path) as fh:
        head = fh.readline().strip()
        if not head.startswith("# mtrluq-csv"):
            raise ConfigError(f"{path}: missing mtrluq-csv header")
        tokens = head.split()
        if len(tokens) < 3 or tokens[2] != CSV_VERSION:
            raise ConfigError(f"{path}: unsupported CSV version")
        meta = dict(t.split("=", 1) for t in tokens[3:] if "=" in t)
        if kind is not None and meta.get("kind") != kind:
            raise ConfigError(f"{path}: expected a {kind!r} table, got {meta.get('kind')!r}")
        rows = list(csv.DictReader(fh))
    return meta, rows


def _table(rows, value_col):
    """Rows keyed by quantity -> (f, values) arrays in file order."""
    out = {}
    for r in rows:
        out.setdefault(r["quantity"], ([], []))
        out[r["quantity"]][0].append(float(r["f_hz"]))
        out[r["quantity"]][1].append(float(r[value_col]))
    return {q: (np.array(f), np.array(v)) for q, (f, v) in out.items()}


# -- standards manifest -----------------------------------------------------------

def write_manifest(path, line_files, lengths, reflect_file, reflect_estimate, ereff_guess, dut_file=None):
    est = complex(reflect_estimate)
    m = {
        "lines": [{"file": f, "length": float(l)} for f, l in zip(line_files, lengths)],
        "reflect": {"file": reflect_file, "estimate": [est.real, est.imag]},
        "ereff_guess": float(ereff_guess),
    }
    if dut_file:
        m["dut"] = dut_file
    with open(path, "w") as fh:
        json.dump(m, fh, indent=2)


def load_manifest(path):
    """Read a standards manifest; returns ``(CalibrationSet, raw DUT or None)``."""
    if path is None:
        raise ConfigError("no standards manifest given (key 'standards')")
    if not os.path.exists(path):
        raise ConfigError(f"standards manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    m = _load_mapping(path)
    unknown = set(m) - {"lines", "reflect", "ereff_guess", "dut"}
    if unknown:
        raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")

    def net(rel):
        p = os.path.join(base, rel)
        if not os.path.exists(p):
            raise ConfigError(f"standard file not found: {p}")
        return read_touchstone(p)

    lines = m.get("lines") or []
    if len(lines) < 2:
        raise ConfigError("manifest needs at least two lines")
    if "reflect" not in m:
        raise ConfigError("manifest has no reflect standard")
    try:
        ls = tuple(LineStandard(float(e["length"]), net(e["file"])) for e in lines)
        r = m["reflect"]
        refl = ReflectStandard(net(r["file"]), _complex_value(r.get("estimate", -1.0), "reflect.estimate"))
        cs = CalibrationSet(ls, refl, float(m.get("ereff_guess", 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid manifest {path}: {exc}") from exc
    dut = net(m["dut"]) if m.get("dut") else None
    return cs, dut


# -- commands ---------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, out, seed=None, **_):
    sc = cfg.synth_scenario(seed)
    cs, raw, truth = generate(sc)
    files = []
    for i, ln in enumerate(cs.lines):
        name = f"line_{i}.s2p"
        write_touchstone(ln.measurement, os.path.join(out, name), [f"line {i}, length {ln.length!r} m"])
        files.append(name)
    write_touchstone(cs.reflect.measurement, os.path.join(out, "reflect.s2p"), ["reflect"])
    write_touchstone(raw, os.path.join(out, "dut_raw.s2p"), ["raw DUT"])
    write_manifest(os.path.join(out, "standards.json"), files, sc.lengths, "reflect.s2p", sc.reflect_estimate,
                   sc.ereff_guess, "dut_raw.s2p")
    cols = ["f_hz", "gamma_re", "gamma_im", "ereff"] + _box_cols() + ["dut_" + c for c in _s_cols()]
    rows = []
    for n, f in enumerate(truth.grid.points):
        rows.append([f, truth.gamma[n].real, truth.gamma[n].imag, truth.ereff[n].real]
                    + _box_vals(truth.A[n], truth.B[n], truth.k[n]) + _s_vals(truth.dut_s[n]))
    write_csv(os.path.join(out, "truth.csv"), "truth", cols, rows)
    echo = asdict(sc)
    for key in ("reflect", "reflect_estimate", "k"):
        if echo[key] is not None:
            echo[key] = [complex(echo[key]).real, complex(echo[key]).imag]
    with open(os.path.join(out, "scenario.json"), "w") as fh:
        json.dump(echo, fh, indent=2)
    return EXIT_OK


def _s_cols():
    return [f"{n}_{p}" for n in ("s11", "s21", "s12", "s22") for p in ("re", "im")]


def _s_vals(s):
    return [x for v in (s[0, 0], s[1, 0], s[0, 1], s[1, 1]) for x in (v.real, v.imag)]


def _box_cols():
    names = ["a11", "a12", "a21", "a22", "b11", "b12", "b21", "b22", "k"]
    return [f"{n}_{p}" for n in names for p in ("re", "im")]


def _box_vals(A, B, k):
    vals = [A[0, 0], A[0, 1], A[1, 0], A[1, 1], B[0, 0], B[0, 1], B[1, 0], B[1, 1], k]
    return [x for v in vals for x in (complex(v).real, complex(v).imag)]


def _check_failures(status_ok, strict, what):
    bad = int(np.count_nonzero(~status_ok))
    if bad and (strict or bad > FAILURE_LIMIT * len(status_ok)):
        raise SolverFailure(f"{what} failed at {bad} of {len(status_ok)} frequencies")
    if bad:
        log.warning("%s failed at %d of %d frequencies", what, bad, len(status_ok))


def cmd_calibrate(cfg: RunConfig, out, strict=False, **_):
    cs, dut = load_manifest(cfg.standards)
    res = calibrate(cs, strict=strict)
    _check_failures(res.ok, strict, "calibration")
    cols = ["f_hz"] + _box_cols() + ["gamma_re", "gamma_im", "ereff", "loss_db_per_m", "loss_db_per_mm", "status"]
    rows = []
    for n, f in enumerate(res.f):
        g = res.gamma[n]
        rows.append([f] + _box_vals(res.A[n], res.B[n], res.k[n])
                    + [g.real, g.imag, float(res.ereff[n].real), float(res.loss_db_per_m[n]),
                       float(res.loss_db_per_m[n]) / 1e3, describe_status(res.status[n])])
    write_csv(os.path.join(out, "calibration.csv"), "calibration", cols, rows)
    if dut is not None:
        corrected = apply_calibration(res, dut)
        rows = [[f] + _s_vals(corrected.s[n]) for n, f in enumerate(res.f)]
        write_csv(os.path.join(out, "dut_corrected.csv"), "dut", ["f_hz"] + _s_cols(), rows)
        if np.all(res.ok):
            write_touchstone(corrected, os.path.join(out, "dut_corrected.s2p"), ["calibrated DUT"])
    return EXIT_OK


def _registry(cfg: RunConfig, cs):
    from .uncertainty import (
        ParamRegistry,
        register_forward_model,
        register_inverse_model,
        register_measurement_noise,
    )

    reg = ParamRegistry(cs)
    register_measurement_noise(reg, cfg.sigma_add)
    if cfg.covariance:
        names, cov = read_covariance_csv(cfg.covariance)
        reg.add_named("measurement", names, cov)
    register_forward_model(reg, cfg.sigma_length, cfg.sigma_reflect)
    if cfg.inverse_model and cfg.sigma_er_rel > 0:
        register_inverse_model(reg, reg.cal0, cfg.sigma_er_rel, cfg.z0_line, cfg.z_ref)
    return reg


def read_covariance_csv(path):
    """Square covariance matrix keyed by parameter names (first row and column)."""
    if not os.path.exists(path):
        raise ConfigError(f"covariance file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    try:
        names = [n.strip() for n in rows[0][1:]]
        if [r[0].strip() for r in rows[1:]] != names:
            raise ConfigError(f"{path}: row names must match column names")
        cov = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed covariance CSV") from exc
    if cov.shape != (len(names), len(names)):
        raise ConfigError(f"{path}: covariance is not square")
    return names, cov


def _uncertainty_rows(f, prop):
    from .montecarlo import flatten_outputs

    nominal = flatten_outputs({k: v.nominal for k, v in prop.outputs.items()})
    std = flatten_outputs({k: v.std for k, v in prop.outputs.items()})
    rows = [[fi, q, nominal[q][n], std[q][n]] for n, fi in enumerate(f) for q in nominal]
    return nominal, std, rows


def cmd_propagate(cfg: RunConfig, out, strict=False, **_):
    from .montecarlo import flatten_outputs
    from .uncertainty import GROUPS, propagate

    cs, dut = load_manifest(cfg.standards)
    t0 = time.perf_counter()
    reg = _registry(cfg, cs)
    prop = propagate(reg, dut)
    seconds = time.perf_counter() - t0
    _check_failures(reg.cal0.ok, strict, "propagation")
    f = cs.grid.points
    nominal, std, rows = _uncertainty_rows(f, prop)
    write_csv(os.path.join(out, "uncertainty.csv"), "uncertainty", ["f_hz", "quantity", "nominal", "std"], rows)

    budgets = {g: flatten_outputs({k: v.budget[g] for k, v in prop.outputs.items()}) for g in GROUPS}
    rows = []
    for n, fi in enumerate(f):
        for q in nominal:
            for g in GROUPS:
                rows.append([fi, q, g, budgets[g][q][n]])
            rows.append([fi, q, "total", std[q][n] ** 2])
    write_csv(os.path.join(out, "budget.csv"), "budget", ["f_hz", "quantity", "group", "variance"], rows)

    from .plots import band_plot

    for q, label, name in PLOTTED:
        band_plot(os.path.join(out, name), f, nominal[q], std[q], label)
    with open(os.path.join(out, "timing.json"), "w") as fh:
        json.dump({"lu_seconds": seconds}, fh, indent=2)
    return EXIT_OK


def _mc_scenario(cfg: RunConfig, seed=None, trials=None):
    from .montecarlo import MCScenario

    return MCScenario(
        synth=cfg.synth_scenario(),
        trials=cfg.trials if trials is None else trials,
        seed=cfg.seed if seed is None else seed,
        sigma_add=cfg.sigma_add,
        sigma_length=cfg.sigma_length,
        sigma_reflect=cfg.sigma_reflect,
        sigma_er_rel=cfg.sigma_er_rel,
        shared_er=cfg.shared_er,
    )


def cmd_montecarlo(cfg: RunConfig, out, strict=False, **_):
    from .montecarlo import compare_lu_mc, lu_std_flat, run_lu, run_mc, thread_count
    from .plots import ratio_plot

    mc = _mc_scenario(cfg)
    threads = thread_count()
    res = run_mc(mc, threads=threads, keep_samples=False)
    prop, lu_seconds = run_lu(mc, inverse_model=cfg.inverse_model)
    lu_std = lu_std_flat(prop)
    cmp = compare_lu_mc(res, lu_std, lu_seconds=lu_seconds)
    rows = []
    for n, fi in enumerate(res.f):
        for q in res.quantities:
            mstd = res.std[q][n]
            r = lu_std[q][n] / mstd if mstd > 0 else float("nan")
            rows.append([fi, q, res.nominal[q][n], lu_std[q][n], mstd, res.mean[q][n], r, int(res.counts[n])])
    write_csv(
        os.path.join(out, "montecarlo.csv"),
        "montecarlo",
        ["f_hz", "quantity", "nominal", "lu_std", "mc_std", "mc_mean", "ratio", "trials"],
        rows,
        {"trials": mc.trials, "seed": mc.seed},
    )
    timing = {
        "mc_seconds": res.seconds,
        "lu_seconds": lu_seconds,
        "speedup": res.seconds / lu_seconds,
        "trials": mc.trials,
        "threads": threads,
        "failed_trials": res.failures,
    }
    with open(os.path.join(out, "timing.json"), "w") as fh:
        json.dump(timing, fh, indent=2)
    ratio_plot(os.path.join(out, "ratio.svg"), res.f, cmp.ratio)
    log.info("montecarlo: %s (%s)", cmp.verdict, cmp.fraction_in_band)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out, strict=False, lu=None, mc=None, **_):
    from .montecarlo import COMPARED, MCResult, compare_lu_mc
    from .plots import overlay_plot, ratio_plot

    lu_path = lu or cfg.lu_csv
    mc_path = mc or cfg.mc_csv
    if not lu_path or not mc_path:
        raise ConfigError("compare needs both an LU table (--lu) and a Monte Carlo table (--mc)")
    _, lu_rows = read_csv(lu_path)
    mc_meta, mc_rows = read_csv(mc_path, "montecarlo")
    lu_col = "std" if lu_rows and "std" in lu_rows[0] else "lu_std"
    lu_tab = _table(lu_rows, lu_col)
    mc_std = _table(mc_rows, "mc_std")
    mc_nom = _table(mc_rows, "nominal")
    mc_mean = _table(mc_rows, "mc_mean")
    missing = [q for q in COMPARED if q not in lu_tab or q not in mc_std]
    if missing:
        raise ConfigError(f"tables lack quantities {missing}")
    f_mc = mc_std[COMPARED[0]][0]
    result = MCResult(
        f=f_mc,
        quantities=tuple(mc_std),
        nominal={q: v for q, (_, v) in mc_nom.items()},
        mean={q: v for q, (_, v) in mc_mean.items()},
        std={q: v for q, (_, v) in mc_std.items()},
        counts=np.array([int(r["trials"]) for r in mc_rows if r["quantity"] == COMPARED[0]]),
        trials=int(mc_meta.get("trials", 0)),
        failures=0,
        seconds=float("nan"),
    )
    timing_path = os.path.join(os.path.dirname(os.path.abspath(mc_path)), "timing.json")
    lu_seconds = None
    if os.path.exists(timing_path):
        with open(timing_path) as fh:
            t = json.load(fh)
        result.seconds = t.get("mc_seconds", float("nan"))
        lu_seconds = t.get("lu_seconds")
    cmp = compare_lu_mc(result, {q: v for q, (_, v) in lu_tab.items()}, f=lu_tab[COMPARED[0]][0],
                        lu_seconds=lu_seconds)
    report = cmp.as_dict()
    with open(os.path.join(out, "verdict.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    ratio_plot(os.path.join(out, "compare.svg"), f_mc, cmp.ratio)
    for q in COMPARED:
        overlay_plot(os.path.join(out, f"compare_{q}.svg"), f_mc, lu_tab[q][1], mc_std[q][1], q)
    print(json.dumps(report))
    if strict and cmp.verdict == "fail":
        raise VerdictFailure("LU and MC uncertainties disagree")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "calibrate": cmd_calibrate,
    "propagate": cmd_propagate,
    "montecarlo": cmd_montecarlo,
    "compare": cmd_compare,
}


def build_parser():
    p = argparse.ArgumentParser(prog="mtrluq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML or JSON run configuration")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, help="override the seed")
        s.add_argument("--trials", type=int, help="override the Monte Carlo trial count")
        s.add_argument("--strict", action="store_true", help="treat any failure as fatal")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "compare":
            s.add_argument("--lu", help="LU table (uncertainty.csv or montecarlo.csv)")
            s.add_argument("--mc", help="Monte Carlo table (montecarlo.csv)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        overrides = {"trials": args.trials}
        if args.command != "synth":
            overrides["seed"] = args.seed
        cfg = RunConfig.load(args.config, **overrides)
        os.makedirs(args.out, exist_ok=True)
        kw = dict(strict=args.strict)
        if args.command == "synth":
            kw["seed"] = args.seed
        if args.command == "compare":
            kw.update(lu=args.lu, mc=args.mc)
        return COMMANDS[args.command](cfg, args.out, **kw)
    except (ConfigError, TouchstoneParseError, GridMismatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VerdictFailure as exc:
        print(f"verdict: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except (SolverFailure, CalibrationError, MonteCarloAbort, MtrlError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
