import pytest
from hypothesis import given
from hypothesis import strategies as st

from paraconv.converters import (
    AveragedState,
    ConverterParams,
    averaged_dynamics,
    control_from_duty,
    duty_from_control,
    nominal_duty,
    plant_tfs,
)
from paraconv.errors import DegenerateStateError, InvalidInputError, InvalidOperatingPointError


def boost(V_g=12.0, V_des=24.0):
    return ConverterParams("boost", 2.4e-3, 4e-4, V_g, V_des)


def test_boost_nominal_duty():
    dp = nominal_duty(boost())
    assert dp.D_prime == pytest.approx(0.5)
    assert dp.gain == pytest.approx(0.5)
    assert dp.D + dp.D_prime == pytest.approx(1.0)


def test_buck_nominal_duty():
    dp = nominal_duty(ConverterParams("buck", 1e-3, 1e-4, 24.0, 12.0))
    assert dp.D == pytest.approx(0.5)
    assert dp.gain == 1.0


def test_buckboost_gain_sign():
    p = ConverterParams("buckboost", 1e-3, 1e-4, 12.0, 6.0)
    dp = nominal_duty(p)
    assert dp.D == pytest.approx(6.0 / (6.0 - 12.0))
    assert dp.gain == pytest.approx(-dp.D_prime)


@pytest.mark.parametrize("topo,V_g,V_des", [("boost", 24, 12), ("boost", 12, 12),
                                            ("buck", 12, 24), ("buckboost", 12, 12)])
def test_invalid_operating_points(topo, V_g, V_des):
    with pytest.raises(InvalidOperatingPointError):
        nominal_duty(ConverterParams(topo, 1e-3, 1e-4, V_g, V_des))


@pytest.mark.parametrize("field", ["L", "C", "V_g", "V_des"])
def test_param_positivity(field):
    kw = dict(topology="boost", L=1e-3, C=1e-4, V_g=12.0, V_des=24.0)
    kw[field] = 0.0
    with pytest.raises(InvalidInputError, match=field):
        ConverterParams(**kw)


def test_unknown_topology():
    with pytest.raises(InvalidInputError):
        ConverterParams("flyback", 1e-3, 1e-4, 12.0, 24.0)


def test_params_roundtrip():
    p = boost()
    assert ConverterParams.from_dict(p.to_dict()) == p
    with pytest.raises(InvalidInputError):
        ConverterParams.from_dict({"topology": "boost"})


def test_plant_tfs():
    Gc, Gv, gain = plant_tfs(boost())
    assert Gc(1j) == pytest.approx(1.0 / (1j * 2.4e-3))
    assert Gv(1j) == pytest.approx(1.0 / (1j * 4e-4))
    assert gain == pytest.approx(0.5)


def test_boost_equilibrium():
    p = boost()
    # d = 0.5, V = 24: volt-second balance; i_L = 2 A carries 1 A of load
    di, dv = averaged_dynamics(AveragedState(2.0, 24.0), 0.5, 1.0, p)
    assert di == pytest.approx(0.0, abs=1e-12)
    assert dv == pytest.approx(0.0, abs=1e-12)


def test_buck_balanced_volt_seconds():
    p = ConverterParams("buck", 1e-3, 1e-4, 24.0, 12.0)
    di, _ = averaged_dynamics(AveragedState(1.0, 12.0), 0.5, 1.0, p)
    assert di == 0.0


def test_duty_range_checked():
    with pytest.raises(InvalidInputError):
        averaged_dynamics(AveragedState(1.0, 24.0), 1.5, 1.0, boost())


@pytest.mark.parametrize("topo,V_g,V_des,V", [("boost", 12, 24, 24.0), ("buck", 24, 12, 12.0),
                                              ("buckboost", 12, 6, 6.0)])
@given(d=st.floats(min_value=0.0, max_value=1.0))
def test_duty_control_roundtrip(topo, V_g, V_des, V, d):
    p = ConverterParams(topo, 1e-3, 1e-4, V_g, V_des)
    x = AveragedState(1.0, V)
    u = control_from_duty(d, x, p)
    back, sat = duty_from_control(u, x, p)
    assert back == pytest.approx(d, abs=1e-12)
    assert not sat or d in (0.0, 1.0)


def test_buck_zero_control_gives_half_duty():
    p = ConverterParams("buck", 1e-3, 1e-4, 24.0, 12.0)
    assert duty_from_control(0.0, AveragedState(0.0, 12.0), p) == (pytest.approx(0.5), False)


def test_duty_clamp_flags_saturation():
    p = boost()
    x = AveragedState(0.0, 24.0)
    assert duty_from_control(1e3, x, p) == (1.0, True)
    assert duty_from_control(-1e3, x, p) == (0.0, True)


def test_degenerate_inversion():
    with pytest.raises(DegenerateStateError):
        duty_from_control(0.0, AveragedState(0.0, 0.0), boost())
    p = ConverterParams("buckboost", 1e-3, 1e-4, 12.0, 6.0)
    with pytest.raises(DegenerateStateError):
        duty_from_control(0.0, AveragedState(0.0, 12.0), p)
