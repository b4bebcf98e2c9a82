import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnopf.errors import CycleDetected, Disconnected, MultipleSlack, NonPositiveBase, NotConverged
from nnopf.grid import (
    PF_TOL,
    Bus,
    Line,
    build_network,
    format_network,
    load_network,
    parse_network,
    run_power_flow,
    save_network,
    synthesize_feeder,
    two_bus_voltage,
)


def two_bus(r=0.05, x=0.02):
    return build_network([Bus(0, "slack"), Bus(1, "load")], [Line(0, 1, r, x)])


def test_two_bus_matches_closed_form_on_load_grid():
    net = two_bus()
    worst = 0.0
    for p in np.linspace(0.0, 1.0, 10):
        for q in np.linspace(-0.2, 0.6, 5):
            res = run_power_flow(net, [p], [q])
            worst = max(worst, abs(res.v_mag[1] - two_bus_voltage(0.05, 0.02, p, q)))
    assert worst <= 1e-8


@settings(max_examples=50, deadline=None)
@given(
    r=st.floats(0.01, 0.1),
    x=st.floats(0.005, 0.05),
    p=st.floats(-0.5, 1.5),
    q=st.floats(-0.3, 0.5),
)
def test_two_bus_closed_form_property(r, x, p, q):
    net = two_bus(r, x)
    res = run_power_flow(net, [p], [q])
    assert abs(res.v_mag[1] - two_bus_voltage(r, x, p, q)) <= 1e-8


def test_slack_balance_includes_losses(rng):
    net = synthesize_feeder(3)
    p = rng.uniform(0.0, 0.1, net.n_load)
    q = rng.uniform(0.0, 0.03, net.n_load)
    res = run_power_flow(net, p, q)
    assert abs(res.p_slack - (p.sum() + res.p_loss)) <= 10 * PF_TOL
    assert abs(res.q_slack - (q.sum() + res.q_loss)) <= 10 * PF_TOL
    assert res.p_loss > 0


def test_no_load_gives_flat_profile():
    net = synthesize_feeder(1)
    res = run_power_flow(net, np.zeros(net.n_load), np.zeros(net.n_load))
    assert np.allclose(res.v_mag, 1.0)
    assert res.iterations == 1


def test_voltage_drops_along_every_path_under_pure_load(rng):
    net = synthesize_feeder(11, n_buses=12)
    res = run_power_flow(net, rng.uniform(0.01, 0.05, net.n_load), rng.uniform(0.0, 0.02, net.n_load))
    for bus in range(1, net.n_buses):
        assert res.v_mag[bus] < res.v_mag[net.parent[bus]]


def test_heavy_load_does_not_converge():
    net = two_bus(0.2, 0.1)
    with pytest.raises(NotConverged) as info:
        run_power_flow(net, [3.0], [1.0], max_iter=30)
    assert info.value.result is not None


def test_network_validation_errors():
    buses = [Bus(0, "slack"), Bus(1, "load"), Bus(2, "load")]
    with pytest.raises(CycleDetected):
        build_network(buses, [Line(0, 1, 0.1, 0.1), Line(1, 2, 0.1, 0.1), Line(2, 0, 0.1, 0.1)])
    with pytest.raises(Disconnected):
        build_network(buses, [Line(0, 1, 0.1, 0.1)])
    with pytest.raises(MultipleSlack):
        build_network([Bus(0, "slack"), Bus(1, "slack")], [Line(0, 1, 0.1, 0.1)])
    with pytest.raises(NonPositiveBase):
        build_network(buses[:2], [Line(0, 1, 0.1, 0.1)], s_base=0.0)


def test_synthesized_feeder_is_deterministic():
    a, b = synthesize_feeder(5), synthesize_feeder(5)
    assert a == b
    assert a.n_buses == 10 and a.load_buses == tuple(range(1, 10))
    for ln in a.lines:
        assert 0.03 <= ln.r <= 0.06 and 0.01 <= ln.x <= 0.02
    assert synthesize_feeder(6) != a


def test_network_file_round_trip(tmp_path):
    net = synthesize_feeder(9)
    save_network(net, tmp_path / "net.txt")
    back = load_network(tmp_path / "net.txt")
    assert back == net
    assert format_network(back) == format_network(net)
    with pytest.raises(ValueError):
        parse_network("not a network")
