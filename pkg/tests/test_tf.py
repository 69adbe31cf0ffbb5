import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal
from scipy.linalg import expm

from paraconv.errors import (
    EmptyResultError,
    ImproperSystemError,
    InfiniteNormError,
    InvalidInputError,
    PoleAtFrequencyError,
    SingularLoopError,
)
from paraconv.tf import (
    FrequencyGrid,
    Polynomial,
    TransferFunction,
    bode,
    coeff_deviation,
    hinf_norm,
    is_stable,
    poly_roots,
    tf_eval,
    tf_feedback,
    tf_minreal,
    tf_to_ss,
)

coef = st.floats(min_value=-10, max_value=10, allow_nan=False).filter(lambda v: abs(v) > 1e-3)
neg_root = st.floats(min_value=0.1, max_value=100.0)


def stable_tf(draw, max_order=3):
    n = draw(st.integers(1, max_order))
    poles = [-draw(neg_root) for _ in range(n)]
    m = draw(st.integers(0, n))
    num = [draw(coef) for _ in range(m + 1)]
    return TransferFunction(num, Polynomial.from_roots(poles))


stable_tfs = st.composite(stable_tf)()
omegas = st.floats(min_value=1e-2, max_value=1e4)


# --- polynomials ----------------------------------------------------------

def test_polynomial_strips_exact_leading_zeros_only():
    assert Polynomial([0.0, 0.0, 1.0, 2.0]).coeffs.tolist() == [1.0, 2.0]
    assert Polynomial([1e-20, 1.0]).degree == 1


def test_polynomial_sum_cancels_to_zero():
    p = Polynomial([3.0, 1.0, -2.0])
    assert (p - p).is_zero()


def test_polynomial_rejects_nan():
    with pytest.raises(InvalidInputError):
        Polynomial([1.0, math.nan])


def test_poly_roots_exact_zero_roots_kept_exact():
    r = poly_roots([1.0, 3.0, 2.0, 0.0, 0.0])
    assert np.count_nonzero(r == 0) == 2
    assert sorted(r.real[r != 0]) == pytest.approx([-2.0, -1.0])


def test_poly_roots_constant_raises():
    with pytest.raises(EmptyResultError):
        poly_roots([4.0])


@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=6))
def test_roots_reconstruct_polynomial(roots):
    p = Polynomial.from_roots(roots)
    back = Polynomial.from_roots(poly_roots(p))
    scale = max(1.0, max(abs(r) for r in roots)) ** len(roots)
    assert np.max(np.abs(back.coeffs - p.coeffs)) <= 1e-8 * scale


def test_coeff_deviation_zero_for_equal():
    assert coeff_deviation([1, 2, 3], [1, 2, 3]) == 0.0
    assert coeff_deviation([1, 2, 3.3], [1, 2, 3]) == pytest.approx(0.1)


# --- transfer functions -----------------------------------------------------

def test_denominator_made_monic():
    g = TransferFunction([2.0], [4.0, 8.0])
    assert g.den.coeffs.tolist() == [1.0, 2.0]
    assert g.num.coeffs.tolist() == [0.5]


def test_zero_denominator_rejected():
    with pytest.raises(InvalidInputError):
        TransferFunction([1.0], [0.0])


def test_eval_at_imaginary_axis_pole():
    with pytest.raises(PoleAtFrequencyError):
        tf_eval(TransferFunction([1.0], [1.0, 0.0, 4.0]), 2.0)


def test_freqresp_matches_scipy():
    g = TransferFunction([3.0, 1.0, 7.0], [1.0, 4.0, 9.0, 2.0])
    w = np.logspace(-2, 3, 50)
    _, h = signal.freqs(g.num.coeffs, g.den.coeffs, worN=w)
    np.testing.assert_allclose(g.freqresp(w), h, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(stable_tfs, stable_tfs, omegas)
def test_algebra_pointwise(a, b, w):
    s = 1j * w
    assert (a + b)(s) == pytest.approx(a(s) + b(s), rel=1e-9, abs=1e-12)
    assert (a * b)(s) == pytest.approx(a(s) * b(s), rel=1e-9, abs=1e-12)
    assert (a - b)(s) == pytest.approx(a(s) - b(s), rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(stable_tfs, stable_tfs, omegas)
def test_feedback_formula(g, h, w):
    s = 1j * w
    want = g(s) / (1.0 + g(s) * h(s))
    if abs(1.0 + g(s) * h(s)) < 1e-6:
        return
    assert tf_feedback(g, h)(s) == pytest.approx(want, rel=1e-8, abs=1e-12)


def test_feedback_singular_loop():
    with pytest.raises(SingularLoopError):
        tf_feedback(TransferFunction([1.0]), TransferFunction([-1.0]))


def test_dc_and_hf_gain():
    g = TransferFunction([2.0, 6.0], [1.0, 3.0])
    assert g.dc_gain() == pytest.approx(2.0)
    assert g.hf_gain() == pytest.approx(2.0)
    with pytest.raises(ImproperSystemError):
        TransferFunction([1.0, 0.0, 0.0], [1.0, 1.0]).hf_gain()


def test_json_roundtrip():
    g = TransferFunction([1.5, -2.0], [1.0, 0.3, 7.0])
    back = TransferFunction.from_json(g.to_json())
    assert back.num.coeffs.tolist() == g.num.coeffs.tolist()
    assert back.den.coeffs.tolist() == g.den.coeffs.tolist()
    with pytest.raises(InvalidInputError):
        TransferFunction.from_dict(json.loads('{"num": [1]}'))


# --- minreal ----------------------------------------------------------------

def test_minreal_cancels_real_pair():
    g = TransferFunction(Polynomial.from_roots([-2.0]) * 3.0, Polynomial.from_roots([-2.0, -5.0]))
    r = tf_minreal(g)
    assert r.den.degree == 1 and r.num.degree == 0
    assert r.dc_gain() == pytest.approx(3.0 / 5.0)


def test_minreal_cancels_complex_pair():
    z = [-1 + 2j, -1 - 2j]
    g = TransferFunction(Polynomial.from_roots(z), Polynomial.from_roots(z + [-3.0]))
    r = tf_minreal(g)
    assert r.den.coeffs.tolist() == pytest.approx([1.0, 3.0])


def test_minreal_returns_same_object_when_minimal():
    g = TransferFunction([1.0, 1.0], [1.0, 5.0, 6.0])
    assert tf_minreal(g) is g


def test_minreal_tolerance_range():
    g = TransferFunction([1.0], [1.0, 1.0])
    for bad in (0.0, -1.0, 0.5):
        with pytest.raises(InvalidInputError):
            tf_minreal(g, bad)


@settings(max_examples=40, deadline=None)
@given(stable_tfs, st.floats(min_value=-20, max_value=-0.2), omegas)
def test_minreal_preserves_response(g, c, w):
    f = Polynomial([1.0, -c])
    padded = TransferFunction(g.num * f, g.den * f)
    r = tf_minreal(padded)
    assert r.den.degree <= padded.den.degree
    assert r(1j * w) == pytest.approx(g(1j * w), rel=1e-6, abs=1e-9)


# --- stability and norms ------------------------------------------------------

def test_is_stable_cases():
    assert is_stable(TransferFunction([1.0], [1.0, 3.0, 2.0])) == (True, pytest.approx(1.0))
    assert not is_stable(TransferFunction([1.0], [1.0, 0.0])).stable
    assert not is_stable(TransferFunction([1.0], [1.0, -1.0])).stable
    assert is_stable(TransferFunction([2.0])).stable


def test_hinf_first_order_lag():
    assert hinf_norm(TransferFunction([1.0], [1.0, 1.0])) == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize("zeta", [0.05, 0.1, 0.3])
def test_hinf_resonance(zeta):
    g = TransferFunction([1.0], [1.0, 2 * zeta, 1.0])
    want = 1.0 / (2 * zeta * math.sqrt(1 - zeta**2))
    assert hinf_norm(g) == pytest.approx(want, rel=1e-3)


def test_hinf_unstable_and_improper():
    with pytest.raises(InfiniteNormError):
        hinf_norm(TransferFunction([1.0], [1.0, -1.0]))
    with pytest.raises(ImproperSystemError):
        hinf_norm(TransferFunction([1.0, 0.0], [1.0]))


@settings(max_examples=30, deadline=None)
@given(stable_tfs)
def test_hinf_bounds_grid(g):
    w = np.logspace(-2, 6, 400)
    assert hinf_norm(g) >= np.max(np.abs(g.freqresp(w))) * (1 - 1e-12)


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        FrequencyGrid([1.0, 1.0])
    with pytest.raises(InvalidInputError):
        FrequencyGrid([-1.0, 2.0])
    with pytest.raises(InvalidInputError):
        FrequencyGrid.logspace(10.0, 1.0, 5)


# --- bode -------------------------------------------------------------------

def test_bode_integrator_slope(tmp_path):
    tab = bode(TransferFunction([1.0], [1.0, 0.0]), FrequencyGrid.logspace(1e-1, 1e3, 41))
    slope = np.diff(tab.mag_db) / np.diff(np.log10(tab.omega))
    np.testing.assert_allclose(slope, -20.0, atol=1e-9)
    np.testing.assert_allclose(tab.phase_deg, -90.0, atol=1e-9)
    tab.to_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "omega,mag_db,phase_deg,pole_at_frequency"
    w, m, ph, flag = lines[1].split(",")
    assert (float(w), float(m), float(ph), int(flag)) == (pytest.approx(0.1), pytest.approx(20.0), -90.0, 0)


def test_bode_consistent_with_eval():
    g = TransferFunction([1.0, 2.0], [1.0, 0.5, 9.0])
    grid = FrequencyGrid.logspace(1e-1, 1e2, 30)
    tab = bode(g, grid)
    for w, m in zip(tab.omega, tab.mag_db):
        assert m == pytest.approx(20 * math.log10(abs(tf_eval(g, w))), abs=1e-12)


def test_bode_flags_pole_on_axis():
    g = TransferFunction([1.0], [1.0, 0.0, 4.0])
    tab = bode(g, FrequencyGrid([1.0, 2.0, 3.0]))
    assert tab.pole_flag.tolist() == [False, True, False]
    assert math.isnan(tab.mag_db[1])


# --- state space ------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(stable_tfs, omegas)
def test_state_space_realisation(g, w):
    A, B, C, D = tf_to_ss(g)
    n = A.shape[0]
    h = C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D
    assert h == pytest.approx(g(1j * w), rel=1e-8, abs=1e-12)


def test_state_space_step_matches_scipy():
    g = TransferFunction([2.0, 1.0], [1.0, 3.0, 5.0])
    A, B, C, D = tf_to_ss(g)
    t = np.linspace(0, 3, 31)
    _, y_ref = signal.step((g.num.coeffs, g.den.coeffs), T=t)
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = B
    y = [C @ expm(M * tt)[:n, n] + D for tt in t]
    np.testing.assert_allclose(y, y_ref, atol=1e-9)
