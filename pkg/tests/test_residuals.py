import numpy as np
import pytest

from hybridpf import (
    AcBranch,
    AcBus,
    AcBusKind,
    Converter,
    ConverterMode,
    DcBranch,
    DcBus,
    DcBusKind,
    InfeasibleError,
    NetworkCase,
    SequencePolicy,
    assemble_residuals,
    compile_case,
    feasible_dc_root,
    feasible_root_from_coeffs,
    residual_dc_p,
    residual_dc_v,
    residual_ic_edc_q,
    residual_ic_pac_qac,
    residual_ic_pac_vac,
    residual_pq,
    residual_pv,
)
from hybridpf.cases import BUNDLED, hybrid_edc, two_bus_ac
from hybridpf.losses import LossParams
from hybridpf.residuals import as_model
from hybridpf.sequence import V_NEG
from hybridpf.solver import SolverOptions, flat_start, solve
from hybridpf.verify import fixed_point_solve


def _zero_load_case():
    return NetworkCase(
        name="zl",
        ac_buses=(
            AcBus("B1", AcBusKind.SLACK, v_mag=1.0),
            AcBus("B2", AcBusKind.PQ, p_set=(0.0,) * 3, q_set=(0.0,) * 3),
        ),
        ac_branches=(AcBranch("B1", "B2", z_series=0.1j),),
    )


def test_pq_zero_injection_flat_start_is_exact():
    case = _zero_load_case()
    x = flat_start(case)
    for ph in "abc":
        p, q = residual_pq(case, "B2", ph, x)
        assert abs(p) < 1e-14 and abs(q) < 1e-14


def test_pq_residual_vanishes_at_oracle_solution():
    case = two_bus_ac()
    x = fixed_point_solve(case, tol=1e-12)
    for ph in "abc":
        p, q = residual_pq(case, "B2", ph, x)
        assert abs(p) <= 1e-9 and abs(q) <= 1e-9


def test_pq_export_sign():
    # voltage held at the slack profile, positive injection setpoint
    case = NetworkCase(
        name="sign",
        ac_buses=(
            AcBus("B1", AcBusKind.SLACK, v_mag=1.0),
            AcBus("B2", AcBusKind.PQ, p_set=(0.2,) * 3, q_set=(0.0,) * 3),
        ),
        ac_branches=(AcBranch("B1", "B2", z_series=0.1j),),
    )
    x = flat_start(case)
    p, _ = residual_pq(case, "B2", "a", x)
    assert p > 0


def _pv_case():
    return NetworkCase(
        name="pv",
        ac_buses=(
            AcBus("B1", AcBusKind.SLACK, v_mag=1.0),
            AcBus("B2", AcBusKind.PV, p_set=(0.05,) * 3, v_set=(1.0,) * 3),
        ),
        ac_branches=(AcBranch("B1", "B2", z_series=0.02 + 0.08j),),
    )


def test_pv_magnitude_residual_zero_at_setpoint():
    case = _pv_case()
    x = flat_start(case)  # |E| = 1 = E*
    for ph in "abc":
        _, rv = residual_pv(case, "B2", ph, x)
        assert abs(rv) < 1e-14


def test_pv_magnitude_residual_arithmetic():
    case = _pv_case()
    model = as_model(case)
    x = flat_start(model)
    v = 1.02 * np.exp(1j * np.deg2rad(10.0))
    pos = model.col_of_full[model.ac_bus_ids.index("B2") * 3]
    x.e[pos], x.f[pos] = v.real, v.imag
    _, rv = residual_pv(model, "B2", "a", x)
    assert rv == pytest.approx(1.0 - 1.02**2, abs=1e-12)  # = -0.0404


def test_pv_residuals_vanish_at_converged_state():
    case = _pv_case()
    sol = solve(case, SolverOptions(tolerance=1e-11))
    assert sol.converged
    for ph in "abc":
        rp, rv = residual_pv(case, "B2", ph, sol.x_final)
        assert abs(rp) <= 1e-9 and abs(rv) <= 1e-9


def test_dc_v_node_residual():
    case = NetworkCase(
        name="dc2",
        dc_buses=(DcBus("D1", DcBusKind.V, e_set=1.0),
                  DcBus("D2", DcBusKind.P, p_set=-0.9)),
        dc_branches=(DcBranch("D1", "D2", r=0.1),),
    )
    x = flat_start(case)
    assert residual_dc_v(case, "D1", x) == 0.0


def test_dc_p_node_worked_example():
    # Y = [[10,-10],[-10,10]], E = (1.0, 0.9), P* = -0.9 -> residual 0
    case = NetworkCase(
        name="dc2",
        dc_buses=(DcBus("D1", DcBusKind.V, e_set=1.0),
                  DcBus("D2", DcBusKind.P, p_set=-0.9)),
        dc_branches=(DcBranch("D1", "D2", r=0.1),),
    )
    model = as_model(case)
    x = flat_start(model)
    x.e_dc[:] = (1.0, 0.9)
    assert residual_dc_p(model, "D2", x) == pytest.approx(0.0, abs=1e-14)


def test_dc_residuals_vanish_at_oracle_solution():
    from hybridpf.cases import dc_four

    case = dc_four()
    x = fixed_point_solve(case, tol=1e-12)
    for bus in ("D2", "D3", "D4"):
        assert abs(residual_dc_p(case, bus, x)) <= 1e-9


# --- interfacing converter rows ---------------------------------------------


def _edc_case(lossless=True, dc_load=0.0, e_set=1.0):
    loss = LossParams.zero() if lossless else LossParams.constant(0.01)
    return NetworkCase(
        name="edc",
        ac_buses=(AcBus("B1", AcBusKind.SLACK, v_mag=1.0),
                  AcBus("B2", AcBusKind.CONVERTER)),
        dc_buses=(DcBus("D1", DcBusKind.CONVERTER),
                  DcBus("D2", DcBusKind.P, p_set=dc_load)),
        ac_branches=(AcBranch("B1", "B2", z_series=0.01 + 0.02j),),
        dc_branches=(DcBranch("D1", "D2", r=0.05),),
        converters=(Converter("VSC1", "B2", "D1", ConverterMode.EDC_QAC,
                              e_dc_set=e_set, q_pos_set=0.0, loss=loss),),
    )


def test_edc_qac_all_rows_zero_at_idle_flat_start():
    case = _edc_case(lossless=True, dc_load=0.0, e_set=1.0)
    rows = residual_ic_edc_q(case, "VSC1", flat_start(case))
    assert set(rows) == {"P+:VSC1", "Q+:VSC1", "E0':VSC1", "E0'':VSC1",
                         "E-':VSC1", "E-'':VSC1", "Edc:VSC1:D1"}
    for value in rows.values():
        assert abs(value) < 1e-13


def test_edc_qac_rows_vanish_at_oracle_point():
    case = hybrid_edc()
    x = fixed_point_solve(case, tol=1e-12)
    rows = residual_ic_edc_q(case, "VSC1", x)
    assert max(abs(v) for v in rows.values()) <= 1e-9


def test_edc_qac_negative_sequence_constraint_tracks_injection():
    case = _edc_case()
    model = as_model(case)
    x = flat_start(model)
    bump = 0.03 * np.exp(0.7j)
    pos = model.col_of_full[[3, 4, 5]]  # B2 phases
    x.e[pos] += (V_NEG * bump).real
    x.f[pos] += (V_NEG * bump).imag
    rows = residual_ic_edc_q(model, "VSC1", x)
    assert rows["E-':VSC1"] == pytest.approx(-bump.real, abs=1e-12)
    assert rows["E-'':VSC1"] == pytest.approx(-bump.imag, abs=1e-12)


def _pac_case(policy=SequencePolicy.POSITIVE_ONLY, p_pos=0.0, q_pos=0.0,
              p_neg=None, q_neg=None):
    return NetworkCase(
        name="pac",
        ac_buses=(AcBus("B1", AcBusKind.SLACK, v_mag=1.0),
                  AcBus("B2", AcBusKind.CONVERTER)),
        dc_buses=(DcBus("D1", DcBusKind.CONVERTER),
                  DcBus("D2", DcBusKind.V, e_set=1.0)),
        ac_branches=(AcBranch("B1", "B2", z_series=0.01 + 0.02j),),
        dc_branches=(DcBranch("D1", "D2", r=0.05),),
        converters=(Converter("VSC1", "B2", "D1", ConverterMode.PAC_QAC,
                              p_pos_set=p_pos, q_pos_set=q_pos,
                              p_neg_set=p_neg, q_neg_set=q_neg,
                              sequence_policy=policy, loss=LossParams.zero()),),
    )


def test_pac_qac_all_rows_zero_at_idle_flat_start():
    case = _pac_case()
    rows = residual_ic_pac_qac(case, "VSC1", flat_start(case))
    for value in rows.values():
        assert abs(value) < 1e-13


def test_pac_qac_negative_reference_residual_at_balanced_point():
    # at a balanced state (E- = 0, I- = 0) the P- mismatch equals the reference
    case = _pac_case(policy=SequencePolicy.WITH_NEGATIVE, p_neg=0.05, q_neg=0.0)
    rows = residual_ic_pac_qac(case, "VSC1", flat_start(case))
    assert rows["P-:VSC1"] == pytest.approx(0.05, abs=1e-13)
    assert rows["Q-:VSC1"] == pytest.approx(0.0, abs=1e-13)
    assert set(rows) == {"P+:VSC1", "Q+:VSC1", "P-:VSC1", "Q-:VSC1",
                         "E0':VSC1", "E0'':VSC1", "Pdc:VSC1:D1"}


def test_pac_qac_rows_vanish_at_oracle_point():
    from hybridpf.cases import hybrid_negseq

    case = hybrid_negseq()
    x = fixed_point_solve(case, tol=1e-12)
    rows = residual_ic_pac_qac(case, "VSC1", x)
    assert max(abs(v) for v in rows.values()) <= 1e-9


def _pacvac_case():
    return NetworkCase(
        name="pacvac",
        ac_buses=(AcBus("B1", AcBusKind.SLACK, v_mag=1.0),
                  AcBus("B2", AcBusKind.CONVERTER)),
        dc_buses=(DcBus("D1", DcBusKind.CONVERTER),
                  DcBus("D2", DcBusKind.V, e_set=1.0)),
        ac_branches=(AcBranch("B1", "B2", z_series=0.01 + 0.02j),),
        dc_branches=(DcBranch("D1", "D2", r=0.05),),
        converters=(Converter("VSC1", "B2", "D1", ConverterMode.PAC_VAC,
                              p_pos_set=0.0, v_mag_set=1.0, loss=LossParams.zero()),),
    )


def test_pac_vac_all_rows_zero_at_idle_flat_start():
    rows = residual_ic_pac_vac(_pacvac_case(), "VSC1", flat_start(_pacvac_case()))
    for value in rows.values():
        assert abs(value) < 1e-13


def test_pac_vac_magnitude_row_zero_at_setpoint():
    case = _pacvac_case()
    rows = residual_ic_pac_vac(case, "VSC1", flat_start(case))
    assert rows["V+:VSC1"] == pytest.approx(0.0, abs=1e-14)


def test_pac_vac_rows_vanish_at_oracle_point():
    from hybridpf.cases import hybrid_pacvac

    case = hybrid_pacvac()
    x = fixed_point_solve(case, tol=1e-12)
    rows = residual_ic_pac_vac(case, "VSC1", x)
    assert max(abs(v) for v in rows.values()) <= 1e-9


# --- full residual vector ----------------------------------------------------


def test_assemble_residuals_zero_for_idle_network():
    case = _edc_case()
    res = assemble_residuals(case, flat_start(case))
    assert res.max_abs() < 1e-13


def test_assemble_residuals_at_solved_microgrid(microgrid):
    sol = solve(microgrid, SolverOptions(tolerance=1e-6))
    assert sol.converged
    res = assemble_residuals(microgrid, sol.x_final)
    assert res.max_abs() <= 1e-6


@pytest.mark.parametrize("name", sorted(BUNDLED))
def test_square_system_every_bundled_case(name):
    model = compile_case(BUNDLED[name]())
    x = flat_start(model)
    res = assemble_residuals(model, x)
    assert res.values.size == model.n_x == x.to_array().size
    texts = [lab.text() for lab in res.labels]
    assert len(set(texts)) == len(texts)  # labels unique


def test_residual_labels_cover_documented_blocks(microgrid):
    model = compile_case(microgrid)
    kinds = [lab.kind for lab in model.labels]
    order = {k: i for i, k in enumerate(
        ("P", "Q", "Edc", "P+", "Q+", "E0'", "E-'", "E0''", "E-''", "Pdc"))}
    block_of = [
        0 if k == "P" else
        1 if k in ("Q", "V") else
        2 if k == "Edc" else
        3 if k in ("P+", "Q+", "V+", "P-", "Q-") else
        4 if k.startswith("E0") or k.startswith("E-'") or k in ("E-''",) else
        5
        for k in kinds
    ]
    assert block_of == sorted(block_of)


# --- quadratic DC root -------------------------------------------------------


def test_feasible_root_worked_example():
    # 10 E^2 - 9.5 E - 0.5 = 0 has roots {1.0, -0.05}; pick the one nearer 1
    assert feasible_root_from_coeffs(10.0, -9.5, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_feasible_root_no_load_fixed_point():
    case = _edc_case()
    x = flat_start(case)
    assert feasible_dc_root(case, "VSC1", x) == pytest.approx(1.0, abs=1e-12)


def test_feasible_root_negative_discriminant_raises():
    with pytest.raises(InfeasibleError):
        feasible_root_from_coeffs(10.0, 0.1, -10.0)


def test_feasible_root_infeasible_state_raises():
    case = _edc_case()
    model = as_model(case)
    x = flat_start(model)
    # force a huge AC-side transfer: drop the converter voltage far below slack
    pos = model.col_of_full[[3, 4, 5]]
    v = 0.2 * np.exp(-1j * np.pi / 3) * np.array(
        [1.0, np.exp(-2j * np.pi / 3), np.exp(2j * np.pi / 3)])
    x.e[pos], x.f[pos] = v.real, v.imag
    with pytest.raises(InfeasibleError):
        feasible_dc_root(model, "VSC1", x)


@pytest.mark.parametrize("name", [n for n in sorted(BUNDLED)
                                  if any(c.mode == ConverterMode.EDC_QAC
                                         for c in BUNDLED[n]().converters)])
def test_feasible_root_within_band_for_bundled_cases(name):
    case = BUNDLED[name]()
    sol = solve(case, SolverOptions(tolerance=1e-10))
    assert sol.converged
    for conv in case.converters:
        if conv.mode == ConverterMode.EDC_QAC:
            root = feasible_dc_root(case, conv.id, sol.x_final)
            assert 0.5 <= root <= 1.5
