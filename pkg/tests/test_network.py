import numpy as np
import pytest
from numpy.testing import assert_allclose

from hybridpf import (
    AcBranch,
    AcBus,
    AcBusKind,
    Converter,
    ConverterMode,
    DataError,
    DcBranch,
    DcBus,
    DcBusKind,
    NetworkCase,
    SequencePolicy,
    TopologyError,
    build_ac_admittance,
    build_dc_admittance,
    validate_topology,
)
from hybridpf.losses import LossParams


def _slack(bus_id="B1"):
    return AcBus(bus_id, AcBusKind.SLACK, v_mag=1.0)


def _pq(bus_id, p=-0.1, q=0.0):
    return AcBus(bus_id, AcBusKind.PQ, p_set=(p,) * 3, q_set=(q,) * 3)


def test_single_branch_stamp():
    buses = (_slack("B1"), _pq("B2"))
    adm = build_ac_admittance(buses, (AcBranch("B1", "B2", z_series=0.1j),))
    y = adm.y_ac.toarray()
    for p in range(3):
        assert_allclose(y[p, p], -10j, atol=1e-12)
        assert_allclose(y[3 + p, 3 + p], -10j, atol=1e-12)
        assert_allclose(y[p, 3 + p], 10j, atol=1e-12)
        assert_allclose(y[3 + p, p], 10j, atol=1e-12)
    # phases are uncoupled for a diagonal branch
    assert y[0, 1] == 0 and y[0, 4] == 0


def test_empty_branch_list_gives_zero_matrix():
    adm = build_ac_admittance((_slack("B1"), _pq("B2")), ())
    assert adm.y_ac.nnz == 0
    assert adm.y_ac.shape == (6, 6)


def test_ring_diagonal_is_twice_offdiagonal():
    buses = (_slack("B1"), _pq("B2"), _pq("B3"))
    branches = tuple(
        AcBranch(a, b, z_series=0.05j) for a, b in (("B1", "B2"), ("B2", "B3"), ("B3", "B1"))
    )
    y = build_ac_admittance(buses, branches).y_ac.toarray()
    for p in range(3):
        assert_allclose(abs(y[p, p]), 2 * abs(y[p, 3 + p]), rtol=1e-12)


def test_ac_admittance_symmetric(microgrid):
    from hybridpf.network import compound_admittance

    adm = compound_admittance(microgrid)
    assert (abs(adm.y_ac - adm.y_ac.T)).max() < 1e-12
    assert (abs(adm.y_dc - adm.y_dc.T)).max() < 1e-12


def test_dangling_branch_endpoint_is_topology_error():
    with pytest.raises(TopologyError):
        build_ac_admittance((_slack("B1"),), (AcBranch("B1", "B9", z_series=0.1j),))


def test_singular_impedance_rejected():
    with pytest.raises(DataError):
        AcBranch("B1", "B2", z_series=np.ones((3, 3)))


def test_asymmetric_impedance_rejected():
    z = np.diag([0.1j, 0.1j, 0.1j]).astype(complex)
    z[0, 1] = 0.02j  # no matching [1, 0] term: not a reciprocal branch
    with pytest.raises(DataError):
        AcBranch("B1", "B2", z_series=z)


def test_dc_two_bus_stamp():
    buses = (DcBus("D1", DcBusKind.V, e_set=1.0), DcBus("D2", DcBusKind.P, p_set=0.0))
    y = build_dc_admittance(buses, (DcBranch("D1", "D2", r=0.1),)).y_dc.toarray()
    assert_allclose(y, [[10.0, -10.0], [-10.0, 10.0]], atol=1e-12)


def test_dc_parallel_branches_add():
    buses = (DcBus("D1", DcBusKind.V, e_set=1.0), DcBus("D2", DcBusKind.P, p_set=0.0))
    branches = (DcBranch("D1", "D2", r=0.2), DcBranch("D1", "D2", r=0.2))
    y = build_dc_admittance(buses, branches).y_dc.toarray()
    assert_allclose(y, [[10.0, -10.0], [-10.0, 10.0]], atol=1e-12)


def test_dc_star_diagonals():
    buses = (DcBus("H", DcBusKind.V, e_set=1.0),) + tuple(
        DcBus(f"L{k}", DcBusKind.P, p_set=0.0) for k in range(3)
    )
    branches = tuple(DcBranch("H", f"L{k}", r=1.0) for k in range(3))
    y = build_dc_admittance(buses, branches).y_dc.toarray()
    assert y[0, 0] == pytest.approx(3.0)
    for k in range(1, 4):
        assert y[k, k] == pytest.approx(1.0)


def test_dc_rows_sum_to_zero_without_shunts(microgrid):
    from hybridpf.network import compound_admittance

    y = compound_admittance(microgrid).y_dc
    assert np.abs(np.asarray(y.sum(axis=1))).max() <= 1e-12


def test_non_positive_resistance_rejected():
    with pytest.raises(DataError):
        DcBranch("D1", "D2", r=0.0)


def test_validate_accepts_bundled_microgrid(microgrid):
    assert validate_topology(microgrid) == []


def test_validate_rejects_removed_slack(microgrid):
    buses = tuple(
        _pq(b.id, -0.01, 0.0) if b.kind == AcBusKind.SLACK else b for b in microgrid.ac_buses
    )
    mutated = NetworkCase(
        name="m", ac_buses=buses, dc_buses=microgrid.dc_buses,
        ac_branches=microgrid.ac_branches, dc_branches=microgrid.dc_branches,
        converters=microgrid.converters,
    )
    codes = {d.code for d in validate_topology(mutated)}
    assert "no-slack" in codes


def test_validate_rejects_two_slacks(microgrid):
    buses = tuple(
        _slack(b.id) if b.id == "B02" else b for b in microgrid.ac_buses
    )
    mutated = NetworkCase(
        name="m", ac_buses=buses, dc_buses=microgrid.dc_buses,
        ac_branches=microgrid.ac_branches, dc_branches=microgrid.dc_branches,
        converters=microgrid.converters,
    )
    codes = {d.code for d in validate_topology(mutated)}
    assert "multiple-slack" in codes


def test_validate_rejects_dc_island_without_voltage_source(microgrid):
    # demote both edc_qac converters to pac_qac: no one imposes the DC voltage
    converters = tuple(
        Converter(c.id, c.ac_bus, c.dc_bus, ConverterMode.PAC_QAC,
                  p_pos_set=0.0, q_pos_set=0.0, loss=LossParams.zero())
        if c.mode == ConverterMode.EDC_QAC else c
        for c in microgrid.converters
    )
    mutated = NetworkCase(
        name="m", ac_buses=microgrid.ac_buses, dc_buses=microgrid.dc_buses,
        ac_branches=microgrid.ac_branches, dc_branches=microgrid.dc_branches,
        converters=converters,
    )
    codes = {d.code for d in validate_topology(mutated)}
    assert "no-dc-voltage-source" in codes


def test_validate_rejects_disconnected_dc_bus(microgrid):
    # cutting D25-D26 strands the load bus D26 without any voltage source
    branches = tuple(
        br for br in microgrid.dc_branches if (br.from_bus, br.to_bus) != ("D25", "D26")
    )
    mutated = NetworkCase(
        name="m", ac_buses=microgrid.ac_buses, dc_buses=microgrid.dc_buses,
        ac_branches=microgrid.ac_branches, dc_branches=branches,
        converters=microgrid.converters,
    )
    diags = validate_topology(mutated)
    assert any(d.code == "no-dc-voltage-source" and "D26" in d.subject for d in diags)


def test_validate_flags_bad_converter_link(microgrid):
    converters = microgrid.converters[:3] + (
        Converter("VSC4", "B17", "D99", ConverterMode.PAC_QAC,
                  p_pos_set=0.0, q_pos_set=0.0, loss=LossParams.zero()),
    )
    mutated = NetworkCase(
        name="m", ac_buses=microgrid.ac_buses, dc_buses=microgrid.dc_buses,
        ac_branches=microgrid.ac_branches, dc_branches=microgrid.dc_branches,
        converters=converters,
    )
    diags = validate_topology(mutated)
    assert any(d.code == "bad-link" and "D99" in d.message for d in diags)


def test_with_negative_requires_nonzero_reference():
    with pytest.raises(DataError):
        Converter("V", "B1", "D1", ConverterMode.PAC_QAC,
                  p_pos_set=0.0, q_pos_set=0.0, p_neg_set=0.0, q_neg_set=0.0,
                  sequence_policy=SequencePolicy.WITH_NEGATIVE)


def test_with_negative_only_in_pac_qac():
    with pytest.raises(DataError):
        Converter("V", "B1", "D1", ConverterMode.EDC_QAC,
                  e_dc_set=1.0, q_pos_set=0.0,
                  sequence_policy=SequencePolicy.WITH_NEGATIVE)
