import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from gridkalman.errors import ValidationError
from gridkalman.feeder import make_radial_feeder, suggest_pmu_placement
from gridkalman.network import (
    LineSpec,
    Phasor,
    SlackSpec,
    build_admittance,
    build_measurement_matrix,
    build_network,
    build_selector,
    check_observability,
    dims,
    network_from_dict,
    load_network_file,
    slack_admittance,
)


def two_bus_net(shunt=0.0):
    # series admittance 1 - 2j  <=>  z = 0.2 + 0.4j
    line = LineSpec(1, 2, series_impedance=0.2 + 0.4j, shunt_susceptance=shunt)
    return build_network([1, 2], 1, [line], SlackSpec(bus=1, voltage=1.0))


class TestBuildNetwork:
    def test_duplicate_bus(self):
        with pytest.raises(ValidationError, match="duplicate"):
            build_network([1, 1], 1, [], SlackSpec(bus=1, voltage=1.0))

    def test_dangling_endpoint(self):
        line = LineSpec(1, 3, 0.1 + 0.1j)
        with pytest.raises(ValidationError, match="not a bus"):
            build_network([1, 2], 1, [line], SlackSpec(bus=1, voltage=1.0))

    def test_self_loop(self):
        with pytest.raises(ValidationError, match="self-loop"):
            build_network([1, 2], 1, [LineSpec(1, 1, 0.1j)], SlackSpec(bus=1, voltage=1.0))

    def test_disconnected(self):
        lines = [LineSpec(1, 2, 0.1j)]
        with pytest.raises(ValidationError, match="disconnected"):
            build_network([1, 2, 3], 1, lines, SlackSpec(bus=1, voltage=1.0))

    def test_bad_phase_count(self):
        with pytest.raises(ValidationError):
            build_network([1], 2, [], SlackSpec(bus=1, voltage=1.0))

    def test_three_phase_slack_rotation(self):
        net = make_radial_feeder(3, phases=3)
        v = net.slack_voltages()
        assert_allclose(v[0], 1.0 + 0.0j, atol=1e-15)
        assert_allclose(v[1], np.exp(-2j * np.pi / 3), atol=1e-15)
        assert_allclose(v[2], np.exp(+2j * np.pi / 3), atol=1e-15)

    def test_node_ordering_bus_major(self):
        net = make_radial_feeder(3, phases=3)
        assert net.node_labels()[:4] == [(1, 0), (1, 1), (1, 2), (2, 0)]
        assert net.node_index(2, 1) == 4


class TestAdmittance:
    def test_two_bus_matrix(self):
        Y = build_admittance(two_bus_net(), include_slack_source=False).matrix
        expected = np.array([[1 - 2j, -1 + 2j], [-1 + 2j, 1 - 2j]])
        assert_allclose(Y, expected, atol=1e-12)

    def test_symmetry_and_zero_row_sums(self):
        net = make_radial_feeder(7, phases=3, branching_seed=5)
        Y = build_admittance(net, include_slack_source=False).matrix
        assert_allclose(Y, Y.T, atol=1e-14)
        assert_allclose(Y.sum(axis=1), 0.0, atol=1e-11)

    def test_shunt_splits_between_ends(self):
        Y = build_admittance(two_bus_net(shunt=0.2), include_slack_source=False).matrix
        assert_allclose(Y[0, 0], 1 - 2j + 0.1j, atol=1e-12)
        assert_allclose(Y[1, 1], 1 - 2j + 0.1j, atol=1e-12)
        assert_allclose(Y[0, 1], -1 + 2j, atol=1e-12)

    def test_slack_source_term(self):
        bare = build_admittance(two_bus_net(), include_slack_source=False).matrix
        full = build_admittance(two_bus_net(), include_slack_source=True).matrix
        extra = full[0, 0] - bare[0, 0]
        assert abs(extra) == pytest.approx(300.0, rel=1e-12)
        assert np.angle(extra) == pytest.approx(-math.atan2(1.0, 0.1), abs=1e-12)
        # only the slack diagonal is touched
        assert_allclose(full[0, 1], bare[0, 1], atol=1e-12)
        assert_allclose(full[1, 1], bare[1, 1], atol=1e-12)

    def test_singular_series_impedance(self):
        z = np.zeros((3, 3), dtype=complex)
        net = make_radial_feeder(3, phases=3)
        bad = LineSpec(1, 2, z)
        with pytest.raises(ValidationError, match="singular"):
            build_admittance(
                build_network(net.buses, 3, [bad, LineSpec(2, 3, 0.1j)], net.slack)
            )

    def test_slack_admittance_magnitude(self):
        y = slack_admittance(300.0, 0.1)
        assert abs(y) == pytest.approx(300.0)


class TestSelectorAndMeasurement:
    def test_selector_rows(self):
        net = build_network(
            [1, 2, 3], 1,
            [LineSpec(1, 2, 0.1j), LineSpec(2, 3, 0.1j)],
            SlackSpec(bus=1, voltage=1.0),
        )
        sel = build_selector(net, [3, 1])  # listed out of order on purpose
        expected = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert_allclose(sel.gamma, expected)
        assert sel.pmu_buses == (1, 3)
        # one 1 per row, at most one per column
        assert (sel.gamma.sum(axis=1) == 1).all()
        assert (sel.gamma.sum(axis=0) <= 1).all()

    def test_selector_unknown_bus(self):
        net = two_bus_net()
        with pytest.raises(ValidationError, match="unknown PMU"):
            build_selector(net, [4])

    def test_selector_empty(self):
        with pytest.raises(ValidationError, match="empty"):
            build_selector(two_bus_net(), [])

    def test_two_bus_measurement_matrix(self):
        net = two_bus_net()
        Y = build_admittance(net, include_slack_source=False)
        sel = build_selector(net, [1])
        H = build_measurement_matrix(sel, Y).H
        expected = np.array(
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [1.0, -1.0, 2.0, -2.0],
                [-2.0, 2.0, 1.0, -1.0],
            ]
        )
        assert_allclose(H, expected, atol=1e-12)

    def test_identity_selector_gives_identity_top(self):
        net = make_radial_feeder(4, phases=3)
        Y = build_admittance(net)
        sel = build_selector(net, net.buses)
        H = build_measurement_matrix(sel, Y).H
        S = H.shape[1]
        assert_allclose(H[:S], np.eye(S), atol=1e-14)

    def test_zero_admittance_zero_current_rows(self):
        gamma = np.eye(2)
        H = build_measurement_matrix(gamma, np.zeros((2, 2), dtype=complex)).H
        assert_allclose(H[4:], 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            build_measurement_matrix(np.eye(2), np.zeros((3, 3), dtype=complex))


class TestObservability:
    def test_two_bus_single_pmu_observable(self):
        net = two_bus_net()
        H = build_measurement_matrix(
            build_selector(net, [1]), build_admittance(net)
        )
        rep = check_observability(H)
        assert rep.observable and rep.rank == 4

    def test_voltage_only_rows_unobservable(self):
        # strip the current rows: only the measured bus is pinned
        net = two_bus_net()
        H = build_measurement_matrix(build_selector(net, [1]), build_admittance(net)).H
        rep = check_observability(H[:2])
        assert not rep.observable
        assert rep.rank == 2

    def test_alternate_placement_chain(self):
        net = make_radial_feeder(8, phases=3)
        pmus = suggest_pmu_placement(net, "alternate")
        H = build_measurement_matrix(build_selector(net, pmus), build_admittance(net))
        assert check_observability(H).observable

    def test_rank_invariant_under_row_permutation(self):
        net = make_radial_feeder(5, phases=1)
        H = build_measurement_matrix(
            build_selector(net, [1, 3, 5]), build_admittance(net)
        ).H
        rng = np.random.default_rng(0)
        for _ in range(5):
            perm = rng.permutation(H.shape[0])
            assert check_observability(H[perm]).rank == check_observability(H).rank


def test_dims_formula_exhaustive():
    for n in range(1, 65):
        for P in (1, 3):
            lines = [LineSpec(i, i + 1, 0.01 + 0.02j) for i in range(1, n)]
            net = build_network(range(1, n + 1), P, lines, SlackSpec(bus=1, voltage=1.0))
            for m in range(1, n + 1):
                S, D = dims(net, list(range(1, m + 1)))
                assert S == 2 * n * P
                assert D == 4 * m * P


def test_dims_rejects_empty_and_unknown():
    net = two_bus_net()
    with pytest.raises(ValidationError):
        dims(net, [])
    with pytest.raises(ValidationError):
        dims(net, [9])


@given(
    mag=st.floats(min_value=1e-6, max_value=1e3),
    ang=st.floats(min_value=-math.pi, max_value=math.pi),
)
def test_phasor_polar_round_trip(mag, ang):
    p = Phasor.from_polar(mag, ang)
    assert p.magnitude == pytest.approx(mag, rel=1e-12)
    q = Phasor.from_polar(p.magnitude, p.angle)
    assert q.re == pytest.approx(p.re, abs=1e-9 * mag)
    assert q.im == pytest.approx(p.im, abs=1e-9 * mag)


class TestNetworkFile:
    DOC = {
        "phases": 1,
        "buses": [1, 2],
        "lines": [{"from": 1, "to": 2, "r": 0.2, "x": 0.4}],
        "slack": {"bus": 1, "voltage": 1.0, "s_sc": 300.0, "r_over_x": 0.1},
        "pmu": [1],
    }

    def test_round_trip_matches_api_build(self):
        net, pmu = network_from_dict(self.DOC)
        assert pmu == [1]
        Y = build_admittance(net, include_slack_source=False).matrix
        assert_allclose(Y[0, 0], 1 - 2j, atol=1e-12)

    def test_missing_key(self):
        with pytest.raises(ValidationError, match="lacks key"):
            network_from_dict({"phases": 1})

    def test_file_loader(self, tmp_path):
        path = tmp_path / "net.json"
        path.write_text(json.dumps(self.DOC))
        net, pmu = load_network_file(path)
        assert net.n_nodes == 2

    def test_bad_json(self, tmp_path):
        path = tmp_path / "net.json"
        path.write_text("{nope")
        with pytest.raises(ValidationError, match="JSON"):
            load_network_file(path)
