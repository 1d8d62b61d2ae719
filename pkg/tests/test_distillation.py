import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitsgaps.distillation import (
    ColumnSpec,
    EquilibriumCurve,
    build_equilibrium,
    check_balances,
    column_report,
    flow_profiles,
    operating_lines,
    step_stages,
    write_operating_csv,
    write_stage_csv,
)
from bitsgaps.errors import InputError, SpecificationError
from bitsgaps.thermo import default_system, phase_table, read_phase_csv, wilson_provider

SPEC = ColumnSpec()


@pytest.fixture(scope="module")
def table_curve():
    return build_equilibrium(read_phase_csv(resources.files("bitsgaps.data") / "reference_txy.csv"))


@pytest.fixture(scope="module")
def wilson_curve():
    sys = default_system()
    return build_equilibrium(phase_table(np.linspace(0, 1, 51), wilson_provider(sys), sys))


class TestOperatingLines:
    def test_enriching(self):
        enr, strip, q = operating_lines(SPEC)
        assert enr.slope == pytest.approx(0.5) and enr.intercept == pytest.approx(0.21)
        assert q.x0 == 0.10 and np.isinf(q.slope)

    def test_stripping_pinch(self):
        _, strip, _ = operating_lines(SPEC)
        assert float(strip(0.01)) == pytest.approx(0.01, abs=1e-15)
        # meets the enriching line on the vertical q-line
        assert float(strip(0.10)) == pytest.approx(0.5 * 0.10 + 0.21)

    def test_total_reflux_limit(self):
        enr, _, _ = operating_lines(ColumnSpec(reflux_ratio=1e6))
        assert enr.slope == pytest.approx(1, abs=1e-5) and enr.intercept == pytest.approx(0, abs=1e-6)

    def test_subcooled_q_line(self):
        enr, strip, q = operating_lines(ColumnSpec(q=1.5))
        xi = (q.intercept - enr.intercept) / (enr.slope - q.slope)
        assert float(strip(xi)) == pytest.approx(float(enr(xi)))
        assert float(q(SPEC.x_F)) == pytest.approx(SPEC.x_F)

    def test_degenerate(self):
        with pytest.raises(SpecificationError):
            operating_lines(ColumnSpec(x_D=0.005))
        with pytest.raises(SpecificationError):
            ColumnSpec(n_F=5).validate()


class TestEquilibriumCurve:
    def test_identity(self):
        c = EquilibriumCurve([0.0, 1.0], [0.0, 1.0])
        np.testing.assert_allclose(c(np.linspace(0, 1, 11)), np.linspace(0, 1, 11), atol=1e-15)

    def test_passes_through_knots(self, table_curve):
        assert table_curve(0.040816) == 0.241782
        np.testing.assert_array_equal(table_curve(table_curve.x), table_curve.y)

    def test_inverse_on_monotone_segment(self, table_curve):
        for x in np.linspace(0.001, 0.2, 25):
            assert table_curve.inverse(table_curve(x)) == pytest.approx(x, abs=1e-8)

    def test_roots_of_non_monotone_table(self, table_curve):
        roots = table_curve.roots(0.42)
        assert len(roots) > 1
        for r in roots:
            assert table_curve(r) == pytest.approx(0.42, abs=1e-9)
        assert table_curve.inverse(0.42) == roots[0]

    def test_out_of_range(self, table_curve):
        with pytest.raises(SpecificationError):
            table_curve.inverse(0.9)

    def test_bad_tables(self):
        with pytest.raises(InputError):
            EquilibriumCurve([0.0, 0.0, 1.0], [0.0, 0.5, 1.0])
        with pytest.raises(InputError):
            EquilibriumCurve([0.0], [0.0])
        with pytest.raises(InputError):
            build_equilibrium(np.zeros((3, 4)))


class TestFlows:
    def test_reference_spec(self):
        L, V, D, W, L0, V1, Vr = flow_profiles(SPEC)
        assert D == pytest.approx(100 * 0.09 / 0.41) and D == pytest.approx(21.951, abs=1e-3)
        assert W == pytest.approx(78.049, abs=1e-3)
        assert L0 == pytest.approx(D) and V1 == pytest.approx(2 * D)
        np.testing.assert_allclose(L, [L0, L0 + 100, L0 + 100])
        np.testing.assert_allclose(V, [V1, V1, V1])
        assert L[-1] == pytest.approx(Vr + W)

    def test_x_d_equal_x_w(self):
        with pytest.raises(SpecificationError):
            flow_profiles(ColumnSpec(x_D=0.01))


class TestStepping:
    def test_table_curve_profile(self, table_curve):
        prof = step_stages(SPEC, table_curve)
        assert prof.feasible and prof.x_bottom <= SPEC.x_W
        assert prof.y[0] == SPEC.x_D

    @pytest.mark.parametrize("which", ["table_curve", "wilson_curve"])
    def test_invariants(self, which, request):
        curve = request.getfixturevalue(which)
        prof = step_stages(SPEC, curve)
        np.testing.assert_allclose(curve(prof.x), prof.y, atol=1e-8)
        assert np.all(np.diff(prof.x) < 0)
        assert np.all((prof.x >= 0) & (prof.x <= 1) & (prof.y >= 0) & (prof.y <= 1))
        enr, strip, _ = operating_lines(SPEC)
        for i in range(1, prof.n_stages):
            line = enr if i < SPEC.n_F else strip
            assert prof.y[i] == pytest.approx(float(line(prof.x[i - 1])), abs=1e-14)
        res = check_balances(SPEC, prof)
        assert max(abs(v) for v in res.values()) < 1e-8

    def test_stage_cap(self):
        # curve meets the stripping line at x = 0.05, so stepping pinches there
        _, strip, _ = operating_lines(SPEC)
        x = np.array([0.0, 0.05, 0.1, 0.2, 0.4, 1.0])
        curve = EquilibriumCurve(x, [0.0, float(strip(0.05)), 0.33, 0.5, 0.7, 1.0])
        prof = step_stages(SPEC, curve, max_stages=100)
        assert not prof.feasible and prof.n_stages == 100
        assert prof.x_bottom == pytest.approx(0.05, abs=1e-4)

    def test_report_and_csv(self, table_curve, wilson_curve, tmp_path):
        pw, pt = step_stages(SPEC, wilson_curve), step_stages(SPEC, table_curve)
        rep = column_report(SPEC, pt)
        json.dumps(rep)
        assert rep["feed_stage"] == 2 and rep["n_stages"] == pt.n_stages
        write_stage_csv(tmp_path / "s.csv", {"wilson": pw, "surrogate": pt})
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "stage,x_wilson,x_surrogate,y_wilson,y_surrogate"
        assert len(lines) == 1 + max(pw.n_stages, pt.n_stages)
        write_operating_csv(tmp_path / "o.csv", SPEC)
        o = np.loadtxt(tmp_path / "o.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(o[:, 1], 0.5 * o[:, 0] + 0.21)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 5.0), st.floats(0.05, 0.3), st.floats(0.7, 1.3))
def test_balances_close_on_ideal_curve(R, x_F, q):
    alpha = 2.5
    x = np.linspace(0, 1, 201)
    curve = EquilibriumCurve(x, alpha * x / (1 + (alpha - 1) * x))
    spec = ColumnSpec(reflux_ratio=R, x_D=0.9, x_W=0.02, x_F=x_F, n_F=2, n_stages=3, q=q)
    try:
        prof = step_stages(spec, curve)
    except SpecificationError:
        return
    res = check_balances(spec, prof)
    assert max(abs(v) for v in res.values()) < 1e-8
