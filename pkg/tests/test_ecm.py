import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biascomp.ecm import (REFERENCE_CELLS, BiasSchedule, CellParams, CellState, TimeSeries,
                          ah_to_coulombs, simulate, step_soc, step_vc, terminal_voltage)
from biascomp.errors import FormatError, InvalidInputError

CELL1 = REFERENCE_CELLS["cell1_25c"]

params_st = st.builds(CellParams,
                      rs_ohm=st.floats(0.01, 0.3), rt_ohm=st.floats(0.005, 0.2),
                      tau_s=st.floats(1.0, 200.0), qb_ah=st.floats(0.5, 5.0),
                      eta=st.floats(0.9, 1.0))


def const_profile(i, n, ts=1.0):
    return TimeSeries(np.arange(n) * ts, np.full(n, float(i)))


class TestCellParams:
    def test_derived_capacitance(self):
        assert CELL1.ct_farad == pytest.approx(33.0 / 0.047)

    @pytest.mark.parametrize("field", ["rs_ohm", "rt_ohm", "tau_s", "qb_ah"])
    def test_rejects_non_positive(self, field):
        with pytest.raises(InvalidInputError):
            CELL1.with_(**{field: 0.0})

    @pytest.mark.parametrize("eta", [0.0, 1.01, math.nan])
    def test_rejects_bad_eta(self, eta):
        with pytest.raises(InvalidInputError):
            CELL1.with_(eta=eta)

    def test_dict_round_trip(self):
        assert CellParams.from_dict(CELL1.to_dict()) == CELL1

    def test_capacity_conversion(self):
        assert ah_to_coulombs(1.935) == pytest.approx(6966.0)


class TestStepVc:
    def test_zero_input_zero_state(self):
        assert step_vc(0.0, 0.0, CELL1, 1.0) == 0.0

    def test_decay_over_one_time_constant(self):
        assert step_vc(0.010, 0.0, CELL1, 33.0) == pytest.approx(0.010 * math.exp(-1), rel=1e-12)
        assert step_vc(0.010, 0.0, CELL1, 33.0) == pytest.approx(0.003679, abs=5e-7)

    def test_single_step_cell1(self):
        expected = 0.047 * (1 - math.exp(-1 / 33)) * 0.1935
        assert step_vc(0.0, 0.1935, CELL1, 1.0) == pytest.approx(expected, rel=1e-12)
        # series expansion of 1 - exp(-x) as an independent check
        x = 1 / 33
        assert expected == pytest.approx(0.047 * 0.1935 * (x - x**2 / 2 + x**3 / 6), rel=1e-5)
        assert expected == pytest.approx(2.7146e-4, rel=1e-4)

    @pytest.mark.parametrize("bad", [math.nan, math.inf])
    def test_non_finite(self, bad):
        with pytest.raises(InvalidInputError):
            step_vc(bad, 0.1, CELL1, 1.0)
        with pytest.raises(InvalidInputError):
            step_vc(0.0, bad, CELL1, 1.0)

    def test_non_positive_ts(self):
        with pytest.raises(InvalidInputError):
            step_vc(0.0, 0.1, CELL1, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(p=params_st, i=st.floats(-3.0, 3.0), t=st.floats(0.1, 500.0), n=st.integers(1, 200),
           vc0=st.floats(-0.05, 0.05))
    def test_exact_discretization(self, p, i, t, n, vc0):
        one = step_vc(vc0, i, p, t)
        many = vc0
        for _ in range(n):
            many = step_vc(many, i, p, t / n)
        scale = max(abs(one), abs(vc0), p.rt_ohm * abs(i), 1e-12)
        assert abs(many - one) <= 1e-12 * scale


class TestStepSoc:
    def test_zero_current(self):
        assert step_soc(0.42, 0.0, CELL1, 1.0) == (0.42, False)

    def test_one_hour_at_tenth_c(self):
        soc, clamped = step_soc(0.70, 0.1935, CELL1, 3600.0)
        assert soc == pytest.approx(0.60, abs=1e-12)
        assert not clamped

    def test_floor_clamp(self):
        assert step_soc(0.005, 0.1935, CELL1, 3600.0) == (0.0, True)

    def test_ceiling_clamp(self):
        assert step_soc(0.995, -0.1935, CELL1, 3600.0) == (1.0, True)

    def test_efficiency_scales_charge(self):
        soc, _ = step_soc(0.5, 0.1935, CELL1.with_(eta=0.5), 3600.0)
        assert soc == pytest.approx(0.45, abs=1e-12)


class TestTerminalVoltage:
    def test_rest_equals_ocv(self, ocv):
        assert terminal_voltage(CellState(0.3), 0.0, CELL1, ocv) == ocv.eval(0.3)

    def test_ohmic_drop(self, ocv):
        v = terminal_voltage(CellState(0.3), 0.1935, CELL1, ocv)
        assert ocv.eval(0.3) - v == pytest.approx(0.013352, abs=1e-6)

    def test_charging_sign(self, ocv):
        st_ = CellState(0.3, vc_v=0.002)
        v = terminal_voltage(st_, -0.1935, CELL1, ocv)
        assert v == pytest.approx(ocv.eval(0.3) + 0.0133515 - 0.002, abs=1e-9)


class TestBiasSchedule:
    def test_lookup(self):
        b = BiasSchedule(((0.0, 0.01), (100.0, 0.03)))
        assert b.at(0.0) == 0.01
        assert b.at(99.9) == 0.01
        assert b.at(100.0) == 0.03
        np.testing.assert_array_equal(b.at(np.array([5.0, 150.0])), [0.01, 0.03])

    def test_must_start_at_zero(self):
        with pytest.raises(InvalidInputError):
            BiasSchedule(((1.0, 0.01),))

    def test_starts_strictly_increasing(self):
        with pytest.raises(InvalidInputError):
            BiasSchedule(((0.0, 0.01), (5.0, 0.0), (5.0, 0.02)))


class TestTimeSeries:
    def test_non_uniform_sampling(self):
        with pytest.raises(FormatError):
            _ = TimeSeries([0.0, 1.0, 2.5], [0, 0, 0]).ts

    def test_non_increasing(self):
        with pytest.raises(FormatError):
            TimeSeries([0.0, 1.0, 1.0], [0, 0, 0])

    def test_csv_round_trip(self, tmp_path, ocv):
        sim = simulate(CellState(0.5), const_profile(0.2, 50), CELL1, ocv, noise_std=0.0)
        path = tmp_path / "m.csv"
        sim.to_csv(path)
        assert path.read_text().splitlines()[0] == "t_s,i_a,v_v,soc_true,vc_true"
        back = TimeSeries.from_csv(path)
        np.testing.assert_array_equal(back.v_v, sim.v_v)
        np.testing.assert_array_equal(back.soc_true, sim.soc_true)

    def test_csv_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("time,current\n0,1\n")
        with pytest.raises(FormatError):
            TimeSeries.from_csv(p)


class TestSimulate:
    def test_equilibrium(self, ocv):
        sim = simulate(CellState(0.3), const_profile(0.0, 20), CELL1, ocv, noise_std=0.0)
        np.testing.assert_array_equal(sim.v_v, np.full(20, ocv.eval(0.3)))

    def test_constant_bias_is_additive(self, ocv):
        sim = simulate(CellState(0.3), const_profile(0.0, 20), CELL1, ocv,
                       BiasSchedule.constant(0.010), noise_std=0.0)
        np.testing.assert_allclose(sim.v_v, ocv.eval(0.3) + 0.010, rtol=0, atol=1e-15)

    def test_full_discharge_duration(self, ocv):
        n = 24840
        sim = simulate(CellState(0.70), const_profile(0.1935, n + 1), CELL1, ocv, noise_std=0.0)
        assert sim.soc_true[-1] == pytest.approx(0.01, abs=1e-12)
        assert not sim.meta["clamped"]

    def test_non_uniform_profile(self, ocv):
        with pytest.raises(FormatError):
            simulate(CellState(0.3), TimeSeries([0.0, 1.0, 3.0], [0, 0, 0]), CELL1, ocv)

    def test_noise_needs_rng(self, ocv):
        with pytest.raises(InvalidInputError):
            simulate(CellState(0.3), const_profile(0.0, 5), CELL1, ocv, noise_std=0.001)

    @settings(max_examples=30, deadline=None)
    @given(p=params_st, soc0=st.floats(0.2, 0.8),
           i=st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=300))
    def test_charge_conservation(self, ocv, p, soc0, i):
        cur = TimeSeries(np.arange(len(i)) * 1.0, i)
        sim = simulate(CellState(soc0), cur, p, ocv, noise_std=0.0)
        if sim.meta["clamped"]:
            return
        counted = soc0 - p.eta * np.cumsum(np.r_[0.0, i[1:]]) / ah_to_coulombs(p.qb_ah)
        np.testing.assert_allclose(sim.soc_true, counted, rtol=0, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(b=st.floats(-0.05, 0.05), i=st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=100))
    def test_bias_additivity_exact(self, ocv, b, i):
        cur = TimeSeries(np.arange(len(i)) * 1.0, i)
        clean = simulate(CellState(0.5), cur, CELL1, ocv, noise_std=0.0)
        biased = simulate(CellState(0.5), cur, CELL1, ocv, BiasSchedule.constant(b), 0.0)
        np.testing.assert_array_equal(biased.v_v, clean.v_v + b)

    def test_seed_determinism(self, ocv):
        cur = const_profile(0.3, 500)
        runs = [simulate(CellState(0.5), cur, CELL1, ocv, noise_std=0.001,
                         rng=np.random.default_rng(7)) for _ in range(2)]
        assert runs[0].v_v.tobytes() == runs[1].v_v.tobytes()
        other = simulate(CellState(0.5), cur, CELL1, ocv, noise_std=0.001,
                         rng=np.random.default_rng(8))
        assert not np.array_equal(other.v_v, runs[0].v_v)
