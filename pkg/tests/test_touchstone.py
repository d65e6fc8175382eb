import numpy as np
import pytest

from conftest import random_s
from mtrluq.errors import TouchstoneParseError
from mtrluq.rfcore import FrequencyGrid, TwoPortNetwork
from mtrluq.touchstone import read_touchstone, write_touchstone


def test_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    grid = FrequencyGrid(np.linspace(1e9, 150e9, 17))
    net = TwoPortNetwork(grid, random_s(rng, (17,)))
    p = tmp_path / "x.s2p"
    write_touchstone(net, p, ["hello"])
    back = read_touchstone(p)
    assert back.grid == grid
    np.testing.assert_array_equal(back.s, net.s)
    assert back.z0 == 50.0


def _write(tmp_path, text, name="a.s2p"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize(
    "option, row, expect_f, expect_s11",
    [
        ("# GHZ S RI R 50", "1 0.5 0.5 1 0 0 0 0 0", 1e9, 0.5 + 0.5j),
        ("# MHZ S MA R 50", "100 2 90 1 0 0 0 0 0", 1e8, 2j),
        ("# KHZ S DB R 75", "1 -6.020599913279624 180 0 0 0 0 0 0", 1e3, -0.5),
        ("# HZ S RI", "10 1 0 1 0 0 0 0 0", 10.0, 1.0),
        ("", "1 1 0 1 0 0 0 0 0", 1e9, 1.0),  # defaults: GHZ S MA R 50
    ],
)
def test_formats_and_units(tmp_path, option, row, expect_f, expect_s11):
    p = _write(tmp_path, f"! comment\n{option}\n{row} ! trailing\n")
    net = read_touchstone(p)
    assert net.f[0] == pytest.approx(expect_f)
    assert net.s[0, 0, 0] == pytest.approx(expect_s11, abs=1e-12)
    assert net.s[0, 1, 0] == pytest.approx(1.0)


def test_column_order_s21_before_s12(tmp_path):
    p = _write(tmp_path, "# GHZ S RI R 50\n1 0 0 0.1 0 0.2 0 0 0\n")
    s = read_touchstone(p).s[0]
    assert s[1, 0] == pytest.approx(0.1) and s[0, 1] == pytest.approx(0.2)


def test_reference_resistance_recorded(tmp_path):
    p = _write(tmp_path, "# GHZ S RI R 75\n1 0 0 1 0 1 0 0 0\n")
    assert read_touchstone(p).z0 == 75.0


def test_rows_may_wrap(tmp_path):
    p = _write(tmp_path, "# GHZ S RI R 50\n1 0 0 1 0\n 1 0 0 0\n")
    assert read_touchstone(p).s.shape == (1, 2, 2)


@pytest.mark.parametrize(
    "text, name",
    [
        ("# GHZ Y RI R 50\n1 0 0 1 0 1 0 0 0\n", "a.s2p"),
        ("# GHZ S XX R 50\n1 0 0 1 0 1 0 0 0\n", "a.s2p"),
        ("# GHZ S RI R\n", "a.s2p"),
        ("# GHZ S RI R 50\n1 0 0 1 0 1 0 0\n", "a.s2p"),
        ("# GHZ S RI R 50\n1 0 0 1 0 1 0 0 zz\n", "a.s2p"),
        ("[Version] 2.0\n# GHZ S RI R 50\n", "a.s2p"),
        ("# GHZ S RI R 50\n# GHZ S RI R 50\n1 0 0 1 0 1 0 0 0\n", "a.s2p"),
        ("# GHZ S RI R 50\n2 0 0 1 0 1 0 0 0\n1 0 0 1 0 1 0 0 0\n", "a.s2p"),
        ("# GHZ S RI R 50\n1 0 0 1 0 1 0 0 0\n", "a.s4p"),
    ],
)
def test_malformed_files_raise(tmp_path, text, name):
    with pytest.raises(TouchstoneParseError):
        read_touchstone(_write(tmp_path, text, name))
