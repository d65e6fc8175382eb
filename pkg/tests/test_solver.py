import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtrluq import solver, synth
from mtrluq.errors import (
    AmbiguousSignError,
    CalibrationError,
    DegenerateEigenvaluesError,
    GridMismatchError,
    SingularLineError,
)
from mtrluq.rfcore import FrequencyGrid, TwoPortNetwork, kron_x, s_to_t, t_to_s, vec
from mtrluq.solver import C0, PQ, Status


def random_dut(rng, F):
    s = (rng.normal(size=(F, 2, 2)) + 1j * rng.normal(size=(F, 2, 2))) * 0.3
    s[:, 1, 0] += 0.7
    s[:, 0, 1] += 0.6j
    return s


def embed_dut(truth, s):
    T = truth.k[:, None, None] * (truth.A @ s_to_t(s) @ truth.B)
    return TwoPortNetwork(truth.grid, t_to_s(T))


# -- weighting -----------------------------------------------------------------

def test_weighting_formula_and_antisymmetry():
    l = np.array([0.0, 1e-3, 4e-3])
    g = 5 + 300j
    W = solver.compute_weighting(l, g)
    y, z = np.exp(g * l), np.exp(-g * l)
    np.testing.assert_allclose(W, np.conj(np.outer(y, z) - np.outer(z, y)), rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(W, -W.T, atol=0)
    np.testing.assert_allclose(solver.compute_weighting(l + 7e-3, g), W, rtol=1e-12)


def test_weighting_two_lines():
    theta = 0.4
    W = solver.compute_weighting([0.0, 1.0], 1j * theta)
    np.testing.assert_allclose(W, [[0, 2j * np.sin(theta)], [-2j * np.sin(theta), 0]], atol=1e-15)


def test_weighting_overflow_guard_keeps_direction():
    l = np.array([0.0, 1.0, 3.0])
    g = 400.0 + 10j  # exp(1200) overflows
    W = solver.compute_weighting(l, g)
    assert np.all(np.isfinite(W))
    # every entry shares the factor exp(-1200); the dominant one becomes -exp(3j Im(gamma))
    assert W[0, 2] == pytest.approx(np.conj(-np.exp(3j * g.imag)), rel=1e-12)
    np.testing.assert_allclose(W, -W.T, atol=0)


def test_estimate_gamma_initial():
    g = solver.estimate_gamma_initial([1e9, 2e9], 4.0)
    np.testing.assert_allclose(g, 1j * 2 * np.pi * np.array([1e9, 2e9]) / C0 * 2)
    with pytest.raises(ValueError):
        solver.estimate_gamma_initial([1e9], 0.0)


# -- eigenproblem ------------------------------------------------------------------

def test_eigenstructure_and_normalized_terms(default_data):
    _, cs, _, truth = default_data
    n = 40
    M = solver.build_measurement_matrix(cs.lines, n)
    assert M.shape == (4, len(cs.lines))
    W = solver.compute_weighting(cs.lengths, truth.gamma[n])
    D = np.array([np.linalg.det(ln.measurement.t[n]) for ln in cs.lines])
    F = M @ W @ np.diag(1 / D) @ M.T @ PQ
    ev = np.sort_complex(np.linalg.eigvals(F))
    y, z = np.exp(truth.gamma[n] * cs.lengths), np.exp(-truth.gamma[n] * cs.lengths)
    lam = y @ W @ z
    mags = np.sort(np.abs(ev))
    assert mags[1] < 1e-8 * abs(lam)
    assert np.min(np.abs(ev - lam)) < 1e-9 * abs(lam)
    assert np.min(np.abs(ev + lam)) < 1e-9 * abs(lam)
    xn = solver.solve_x(M, W, D)
    A, B = truth.A[n], truth.B[n]
    assert xn.alpha == pytest.approx(A[1, 0] / A[0, 0], rel=1e-10)
    assert xn.beta == pytest.approx(B[0, 1] / B[0, 0], rel=1e-10)
    assert xn.a_p == pytest.approx(A[0, 1] / A[1, 1], rel=1e-10)
    assert xn.b_p == pytest.approx(B[1, 0] / B[1, 1], rel=1e-10)
    assert xn.lambd == pytest.approx(lam, rel=1e-9)
    # the normalized matrix is the Kronecker structure of the error boxes
    Xn = xn.matrix()
    X = kron_x(A, B)
    np.testing.assert_allclose(Xn[:, 0], X[:, 0] / X[0, 0], atol=1e-10)
    np.testing.assert_allclose(Xn[:, 3], X[:, 3] / X[3, 3], atol=1e-10)


def test_solve_x_rejects_degenerate_and_singular():
    M = np.tile(vec(np.eye(2))[:, None], (1, 2)).astype(complex)
    W = np.array([[0, 1], [-1, 0]], dtype=complex)
    with pytest.raises(DegenerateEigenvaluesError):
        solver.solve_x(M, W)
    M2 = M.copy()
    M2[:, 1] = vec(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularLineError):
        solver.solve_x(M2, W)


# -- full calibration --------------------------------------------------------------

def test_noiseless_calibration_recovers_truth(default_data):
    _, cs, raw, truth = default_data
    res = solver.calibrate(cs)
    assert np.all(res.ok) and not res.issues
    np.testing.assert_allclose(res.gamma, truth.gamma, rtol=1e-12)
    np.testing.assert_allclose(res.A, truth.A, atol=1e-12)
    np.testing.assert_allclose(res.B, truth.B, atol=1e-12)
    np.testing.assert_allclose(res.k, truth.k, rtol=1e-12)
    np.testing.assert_allclose(res.gamma_reflect, -1, atol=1e-12)
    np.testing.assert_allclose(res.ereff, truth.ereff, rtol=1e-12)
    np.testing.assert_allclose((C0 * res.gamma.imag / (2 * np.pi * res.f)) ** 2, 5.0, rtol=1e-12)
    np.testing.assert_allclose(res.loss_db_per_m, 50 * np.sqrt(res.f / 1e9), rtol=1e-10)
    np.testing.assert_allclose(solver.apply_calibration(res, raw).s, truth.dut_s, atol=1e-12)


def test_roundtrip_random_duts(default_data):
    _, cs, _, truth = default_data
    res = solver.calibrate(cs)
    rng = np.random.default_rng(5)
    for _ in range(3):
        s = random_dut(rng, len(truth.grid))
        out = solver.apply_calibration(res, embed_dut(truth, s))
        assert np.max(np.abs(out.s - s)) < 1e-9


def test_lossless_symmetric_dut_stays_unitary(default_data):
    _, cs, raw, _ = default_data
    s = solver.apply_calibration(solver.calibrate(cs), raw).s
    eye = np.conj(np.swapaxes(s, -1, -2)) @ s
    np.testing.assert_allclose(eye, np.broadcast_to(np.eye(2), eye.shape), atol=1e-9)


def test_line_order_does_not_matter(default_data):
    _, cs, raw, truth = default_data
    perm = (3, 0, 4, 1, 2)
    cs2 = solver.CalibrationSet(tuple(cs.lines[i] for i in perm), cs.reflect, cs.ereff_guess)
    r1, r2 = solver.calibrate(cs), solver.calibrate(cs2)
    np.testing.assert_allclose(r2.gamma, r1.gamma, rtol=1e-12)
    np.testing.assert_allclose(solver.apply_calibration(r2, raw).s, truth.dut_s, atol=1e-10)


def test_nonzero_thru_length():
    sc = synth.SynthScenario(lengths=(1e-3, 1.5e-3, 3.5e-3, 6e-3), n_points=30)
    cs, raw, truth = synth.generate(sc)
    res = solver.calibrate(cs)
    assert res.thru_index == 0
    np.testing.assert_allclose(res.gamma, truth.gamma, rtol=1e-10)
    np.testing.assert_allclose(solver.apply_calibration(res, raw).s, truth.dut_s, atol=1e-10)


def test_common_measurement_scale_goes_into_k(default_data):
    _, cs, raw, truth = default_data
    c = 0.3 - 1.7j
    # scaling raw T by c: S11, S22 unchanged, S21 -> S21 / c, S12 -> c S12
    def scaled(net):
        return TwoPortNetwork(net.grid, t_to_s(c * net.t))

    lines = tuple(solver.LineStandard(ln.length, scaled(ln.measurement)) for ln in cs.lines)
    res = solver.calibrate(solver.CalibrationSet(lines, cs.reflect, cs.ereff_guess))
    np.testing.assert_allclose(res.k, c * truth.k, rtol=1e-10)
    np.testing.assert_allclose(res.A, truth.A, atol=1e-10)
    np.testing.assert_allclose(solver.apply_calibration(res, scaled(raw)).s, truth.dut_s, atol=1e-10)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(2.0, 9.0))
def test_roundtrip_property_random_boxes(seed, ereff):
    sc = synth.SynthScenario(n_points=20, seed=seed, ereff=ereff, ereff_guess=ereff * 1.1)
    cs, raw, truth = synth.generate(sc)
    res = solver.calibrate(cs)
    ok = res.ok
    assert ok.mean() > 0.9
    assert np.max(np.abs(solver.apply_calibration(res, raw).s[ok] - truth.dut_s[ok])) < 1e-9
    np.testing.assert_allclose(res.gamma[ok], truth.gamma[ok], rtol=1e-9)


def test_two_lines_against_classical_trl():
    # two-line oracle: eigenvalues of M_line M_thru^-1 are exp(-/+ gamma dl)
    sc = synth.SynthScenario(lengths=(0.0, 1e-3), f_start=1e9, f_stop=20e9, n_points=10)
    cs, raw, truth = synth.generate(sc)
    res = solver.calibrate(cs)
    Mt, Ml = cs.lines[0].measurement.t, cs.lines[1].measurement.t
    ev = np.linalg.eigvals(Ml @ np.linalg.inv(Mt))
    small = np.take_along_axis(ev, np.argmin(np.abs(ev), axis=-1)[:, None], -1)[:, 0]
    gamma_trl = -np.log(small) / 1e-3
    np.testing.assert_allclose(res.gamma, gamma_trl, rtol=1e-10)
    np.testing.assert_allclose(solver.apply_calibration(res, raw).s, truth.dut_s, atol=1e-10)


def test_equal_length_pair_is_fine():
    sc = synth.SynthScenario(lengths=(0.0, 2e-3, 2e-3, 5e-3), n_points=15)
    cs, raw, truth = synth.generate(sc)
    res = solver.calibrate(cs)
    assert np.all(res.ok)
    np.testing.assert_allclose(solver.apply_calibration(res, raw).s, truth.dut_s, atol=1e-10)


def test_poor_ereff_guess_still_converges(default_data):
    _, cs, _, truth = default_data
    for guess in (1.5, 12.0):
        res = solver.calibrate(solver.CalibrationSet(cs.lines, cs.reflect, guess))
        np.testing.assert_allclose(res.gamma, truth.gamma, rtol=1e-10)


# -- failure handling ---------------------------------------------------------------

def _half_wave_set():
    l = 2.5e-3
    fd = C0 / (2 * l * np.sqrt(5.0))
    sc = synth.SynthScenario(lengths=(0.0, l), loss_db_per_m_sqrt_ghz=0.0, frequencies=(10e9, fd, 40e9))
    return synth.generate(sc)


def test_degenerate_frequency_is_flagged():
    cs, raw, truth = _half_wave_set()
    res = solver.calibrate(cs)
    assert res.status[1] & Status.DEGENERATE
    assert res.ok[0] and res.ok[2]
    out = solver.apply_calibration(res, raw).s
    assert np.all(np.isnan(out[1]))
    np.testing.assert_allclose(out[[0, 2]], truth.dut_s[[0, 2]], atol=1e-10)
    with pytest.raises(CalibrationError) as err:
        solver.calibrate(cs, strict=True)
    assert err.value.issues[0][0] == 1


def test_wrong_reflect_estimate_flips_reflection_terms(default_data):
    _, cs, raw, truth = default_data
    wrong = solver.ReflectStandard(cs.reflect.measurement, +1.0)
    res = solver.calibrate(solver.CalibrationSet(cs.lines, wrong, cs.ereff_guess))
    s = solver.apply_calibration(res, raw).s
    np.testing.assert_allclose(s[:, 0, 0], -truth.dut_s[:, 0, 0], atol=1e-10)
    np.testing.assert_allclose(s[:, 1, 1], -truth.dut_s[:, 1, 1], atol=1e-10)
    np.testing.assert_allclose(s[:, 1, 0], truth.dut_s[:, 1, 0], atol=1e-10)
    np.testing.assert_allclose(res.gamma_reflect, 1, atol=1e-10)


def test_orthogonal_reflect_estimate_is_ambiguous(default_data):
    _, cs, _, truth = default_data
    xn = solver.calibrate(cs).normalized
    refl = solver.ReflectStandard(cs.reflect.measurement, 1j)
    res = solver.calibrate(solver.CalibrationSet(cs.lines, refl, cs.ereff_guess))
    assert np.all(res.status & Status.AMBIGUOUS_SIGN)
    with pytest.raises(AmbiguousSignError):
        solver.denormalize(xn, cs.lines[0], refl, truth.gamma, f_index=3)


def test_implausible_reflect_is_flagged():
    sc = synth.SynthScenario(n_points=5, reflect=-3.0, reflect_estimate=-1.0)
    cs, _, _ = synth.generate(sc)
    res = solver.calibrate(cs)
    assert np.all(res.status & Status.INCONSISTENT_REFLECT)


def test_singular_line_is_flagged(default_data):
    _, cs, _, _ = default_data
    s = np.array(cs.lines[2].measurement.s)
    s[7, 0, 1] = 0.0  # det T = S12 / S21 = 0
    bad = solver.LineStandard(cs.lines[2].length, TwoPortNetwork(cs.grid, s))
    lines = cs.lines[:2] + (bad,) + cs.lines[3:]
    res = solver.calibrate(solver.CalibrationSet(lines, cs.reflect, cs.ereff_guess))
    assert res.status[7] & Status.SINGULAR_LINE
    assert np.sum(~res.ok) == 1


def test_public_denormalize_and_extract_gamma(default_data):
    _, cs, _, truth = default_data
    res = solver.calibrate(cs)
    g = solver.extract_gamma(cs, res.normalized, truth.gamma)
    np.testing.assert_allclose(g, truth.gamma, rtol=1e-12)
    A, B, k, refl = solver.denormalize(res.normalized, cs.lines[0], cs.reflect, truth.gamma, f_index=10)
    np.testing.assert_allclose(A, truth.A[10], atol=1e-12)
    np.testing.assert_allclose(k, truth.k[10], rtol=1e-12)


def test_set_validation(default_data):
    _, cs, raw, _ = default_data
    with pytest.raises(ValueError):
        solver.CalibrationSet(cs.lines[:1], cs.reflect)
    with pytest.raises(ValueError):
        solver.CalibrationSet((cs.lines[0], solver.LineStandard(0.0, cs.lines[1].measurement)), cs.reflect)
    with pytest.raises(ValueError):
        solver.LineStandard(-1.0, cs.lines[0].measurement)
    with pytest.raises(ValueError):
        solver.ReflectStandard(cs.reflect.measurement, 0.0)
    other = TwoPortNetwork(FrequencyGrid([1e9]), np.array([[0, 1], [1, 0]]))
    with pytest.raises(GridMismatchError):
        solver.CalibrationSet((cs.lines[0], solver.LineStandard(1e-3, other)), cs.reflect)
    with pytest.raises(GridMismatchError):
        solver.apply_calibration(solver.calibrate(cs), other)
