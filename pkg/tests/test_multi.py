import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paraconv.converters import ConverterParams
from paraconv.design import CASE_INNER_SPEC, design_inner, reference_Kv, target_inner_cl
from paraconv.errors import InfeasibleAllocationError, InvalidInputError, InvariantViolationError
from paraconv.multi import (
    SharingSpec,
    aggregate_inner,
    allocate,
    predicted_shares,
    single_converter_system,
    verify_equivalence,
)
from paraconv.tf import FrequencyGrid

C12 = ConverterParams("boost", 2.4e-3, 4e-4, 12.0, 24.0)
C10 = ConverterParams("boost", 2.4e-3, 4e-4, 10.0, 24.0)


def two(alpha=(0.7, 0.3), beta=(0.5, 0.5), convs=(C12, C10)):
    return allocate(SharingSpec(alpha, beta), list(convs), CASE_INNER_SPEC)


def test_case_study_allocation_values():
    sys_ = two()
    # D'_1 = 1/2, D'_2 = 10/24; D'_n = 1 / (0.7/0.5 + 0.3/(10/24)) = 1/2.12
    assert sys_.nominal.D_prime == pytest.approx(1 / 2.12, rel=1e-12)
    assert sys_.gamma == pytest.approx((0.7 / 0.5 / 2.12, 0.3 * 2.4 / 2.12), rel=1e-12)
    assert sys_.zeta1 == pytest.approx((0.5 * 3.2 / 0.7, 0.5 * 3.2 / 0.3), rel=1e-12)
    assert sys_.nominal.L == pytest.approx(2.4e-3)


def test_equal_sources_split_evenly():
    sys_ = two((0.5, 0.5), (0.5, 0.5), (C12, C12))
    assert sys_.gamma == pytest.approx((0.5, 0.5))
    assert sys_.zeta1 == pytest.approx((3.2, 3.2))
    assert sys_.nominal.D_prime == pytest.approx(0.5)


def test_single_converter_is_trivial():
    sys_ = single_converter_system(C12, CASE_INNER_SPEC)
    assert sys_.gamma == (1.0,)
    assert sys_.zeta1 == pytest.approx((3.2,))
    rep = verify_equivalence(sys_, reference_Kv())
    assert rep.max_deviation < 1e-12


def test_sharing_spec_validation():
    with pytest.raises(InvalidInputError):
        SharingSpec((0.6, 0.3), (0.5, 0.5))
    with pytest.raises(InvalidInputError):
        SharingSpec((0.5, 0.5), (1.0,))
    with pytest.raises(InfeasibleAllocationError):
        SharingSpec((1.0, 0.0), (0.5, 0.5))
    with pytest.raises(InvalidInputError):
        SharingSpec((0.5, 0.5), (1.0, 0.0))
    with pytest.raises(InvalidInputError):
        SharingSpec((1.2, -0.2), (0.5, 0.5))


def test_allocation_needs_common_setpoint():
    other = ConverterParams("boost", 2.4e-3, 4e-4, 10.0, 30.0)
    with pytest.raises(InvalidInputError):
        two(convs=(C12, other))
    with pytest.raises(InvalidInputError):
        allocate(SharingSpec((1.0,), (1.0,)), [C12, C10], CASE_INNER_SPEC)


weights = st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=1, max_size=4)
voltages = st.floats(min_value=3.0, max_value=20.0)


@settings(max_examples=60, deadline=None)
@given(weights, weights, st.data())
def test_allocation_invariants(a, b, data):
    m = min(len(a), len(b))
    alpha = np.array(a[:m]) / sum(a[:m])
    beta = np.array(b[:m]) / sum(b[:m])
    alpha /= alpha.sum()
    beta /= beta.sum()
    convs = [ConverterParams("boost", data.draw(st.floats(1e-3, 5e-3)), 4e-4, data.draw(voltages), 24.0)
             for _ in range(m)]
    sys_ = allocate(SharingSpec(tuple(alpha), tuple(beta)), convs, CASE_INNER_SPEC)
    assert sum(sys_.gamma) == pytest.approx(1.0, abs=1e-12)
    assert float(np.dot(alpha, sys_.zeta1)) == pytest.approx(3.2, rel=1e-12)
    dc, rip = predicted_shares(sys_)
    np.testing.assert_allclose(dc, alpha, atol=1e-9)
    np.testing.assert_allclose(rip, beta, atol=1e-9)


def test_aggregate_inner_equals_nominal():
    sys_ = two()
    agg = aggregate_inner(sys_)
    w = np.logspace(0, 5, 40)
    want = sys_.nominal.D_prime * target_inner_cl(sys_.nominal.spec).freqresp(w)
    np.testing.assert_allclose(agg.freqresp(w), want, rtol=1e-12)


def test_perturbed_gamma_breaks_invariants():
    bad = two().with_gamma((0.6604 * 1.01, 0.3396))
    with pytest.raises(InvariantViolationError):
        bad.check_invariants()
    with pytest.raises(InvariantViolationError):
        aggregate_inner(bad)


def test_equivalence_case_study():
    rep = verify_equivalence(two((0.7, 0.3), (0.7, 0.3)), reference_Kv())
    assert rep.max_deviation < 1e-9
    assert rep.control_deviation < 1e-6
    assert rep.stable_single and rep.stable_multi
    assert set(rep.map_deviation) >= {"e/Vdes", "e/d", "e/n", "V/Vdes", "V/d", "V/n"}


def test_equivalence_negative_control():
    sys_ = two((0.7, 0.3), (0.7, 0.3))
    g = list(sys_.gamma)
    g[0] *= 1.01
    rep = verify_equivalence(sys_.with_gamma(g), reference_Kv())
    assert rep.max_deviation > 1e-4


def test_equivalence_permutation_invariant():
    sys_ = two()
    grid = FrequencyGrid.logspace(1e-1, 1e5, 200)
    a = verify_equivalence(sys_, reference_Kv(), grid=grid)
    b = verify_equivalence(sys_.permuted([1, 0]), reference_Kv(), grid=grid)
    assert b.max_deviation < 1e-9
    assert a.max_deviation == pytest.approx(b.max_deviation, abs=1e-12)


def test_realised_inductance_mismatch_shows_up():
    sys_ = two()
    K_c = [design_inner(sys_.inner_spec(0), 2.0e-3), design_inner(sys_.inner_spec(1), 2.4e-3)]
    rep = verify_equivalence(sys_, reference_Kv(), K_c=K_c)
    assert rep.max_deviation > 1e-4


def test_report_exports(tmp_path):
    rep = verify_equivalence(two(), reference_Kv(), grid=FrequencyGrid.logspace(1, 10, 3))
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "map,omega,deviation"
    assert len(lines) == 1 + 3 * len(rep.pointwise)
    d = rep.to_dict()
    assert d["max_deviation"] == rep.max_deviation


def test_to_dict_fields():
    d = two().to_dict()
    for key in ("D_prime_n", "gamma", "zeta1", "alpha", "beta", "L_n"):
        assert key in d
