"""Touchstone v1 reader/writer for two-port (.s2p) files."""

from __future__ import annotations

import os

import numpy as np

from .errors import TouchstoneParseError
from .rfcore import FrequencyGrid, TwoPortNetwork

_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_FORMATS = ("RI", "MA", "DB")


def _parse_option_line(line):
    tokens = line[1:].upper().split()
    unit, param, fmt, z0 = "GHZ", "S", "MA", 50.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in _UNITS:
            unit = tok
        elif tok in ("S", "Y", "Z", "H", "G"):
            param = tok
        elif tok in _FORMATS:
            fmt = tok
        elif tok == "R":
            if i + 1 >= len(tokens):
                raise TouchstoneParseError(f"missing reference resistance in option line: {line!r}")
            try:
                z0 = float(tokens[i + 1])
            except ValueError as exc:
                raise TouchstoneParseError(f"bad reference resistance in option line: {line!r}") from exc
            i += 1
        else:
            raise TouchstoneParseError(f"unknown token {tok!r} in option line: {line!r}")
        i += 1
    if param != "S":
        raise TouchstoneParseError(f"only S-parameter files are supported, got {param}")
    return _UNITS[unit], fmt, z0


def _to_complex(a, b, fmt):
    if fmt == "RI":
        return a + 1j * b
    if fmt == "MA":
        return a * np.exp(1j * np.deg2rad(b))
    return 10 ** (a / 20) * np.exp(1j * np.deg2rad(b))


def read_touchstone(path):
    """Read a two-port Touchstone v1 file.

    The reference resistance of the option line is kept in ``net.z0``; the
    calibration math itself is ratio based and ignores it.
    """
    ext = os.path.splitext(str(path))[1].lower()
    if ext.startswith(".s") and ext.endswith("p") and ext not in (".s2p",):
        raise TouchstoneParseError(f"{path}: only 2-port files are supported")
    option = None
    numbers = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("!", 1)[0].strip()
            if not line:
                continue
            if line.startswith("#"):
                if option is not None:
                    raise TouchstoneParseError(f"{path}: more than one option line")
                option = _parse_option_line(line)
                continue
            if line.startswith("["):
                raise TouchstoneParseError(f"{path}: Touchstone v2 keywords are not supported")
            try:
                numbers.extend(float(tok) for tok in line.split())
            except ValueError as exc:
                raise TouchstoneParseError(f"{path}: non-numeric data line {raw!r}") from exc
    if option is None:
        option = _parse_option_line("#")
    scale, fmt, z0 = option
    if not numbers or len(numbers) % 9:
        raise TouchstoneParseError(f"{path}: data does not form rows of 9 values (2-port)")
    rows = np.array(numbers).reshape(-1, 9)
    f = rows[:, 0] * scale
    s11 = _to_complex(rows[:, 1], rows[:, 2], fmt)
    s21 = _to_complex(rows[:, 3], rows[:, 4], fmt)
    s12 = _to_complex(rows[:, 5], rows[:, 6], fmt)
    s22 = _to_complex(rows[:, 7], rows[:, 8], fmt)
    s = np.stack([np.stack([s11, s12], -1), np.stack([s21, s22], -1)], -2)
    try:
        grid = FrequencyGrid(f)
    except ValueError as exc:
        raise TouchstoneParseError(f"{path}: {exc}") from exc
    return TwoPortNetwork(grid, s, "S", z0)


def write_touchstone(net: TwoPortNetwork, path, comments=()):
    """Write ``net`` as ``# HZ S RI R 50``; values round-trip exactly."""
    s = net.s
    lines = [f"! {c}" for c in comments]
    lines.append("# HZ S RI R 50")
    for fi, m in zip(net.f, s):
        vals = [m[0, 0], m[1, 0], m[0, 1], m[1, 1]]
        cols = [repr(float(fi))]
        for v in vals:
            cols.append(repr(float(v.real)))
            cols.append(repr(float(v.imag)))
        lines.append(" ".join(cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
