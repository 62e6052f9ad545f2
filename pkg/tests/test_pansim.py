import itertools
import random

import pytest

from vtrack.errors import CapacityError, RangeError, UsageError
from vtrack.pansim import (LOSS, NO_ROUTE, OUT_OF_RANGE, OVERFLOW, QUEUE_LIMIT, ChannelModel,
                           NodeSim, Outage, PanConfig, PanNetwork, airtime_s)


def star(*positions, loss=0.0, seed=0, rate=250_000):
    net = PanNetwork(PanConfig(topology="star", seed=seed, data_rate_bps=rate),
                     ChannelModel(per_hop_loss_prob=loss))
    net.add_node(NodeSim(0, (0.0, 0.0), "coordinator"))
    for i, p in enumerate(positions, start=1):
        net.add_node(NodeSim(i, p, "end-device", 0))
    return net


def mesh(nodes, loss=0.0, seed=0):
    net = PanNetwork(PanConfig(topology="mesh", seed=seed), ChannelModel(per_hop_loss_prob=loss))
    for n in nodes:
        net.add_node(n)
    return net


def test_capacity_is_255_nodes():
    net = PanNetwork(PanConfig(topology="mesh"))
    for i in range(255):
        net.add_node(NodeSim(i))
    with pytest.raises(CapacityError):
        net.add_node(NodeSim(255))
    assert len(net.nodes) == 255


def test_registration_rules():
    net = star()
    with pytest.raises(UsageError):
        net.add_node(NodeSim(0, role="coordinator"))
    with pytest.raises(UsageError):
        net.add_node(NodeSim(9, role="coordinator"))
    with pytest.raises(RangeError):
        PanConfig(channel=27)
    with pytest.raises(RangeError):
        ChannelModel(per_hop_loss_prob=1.5)
    tree = PanNetwork(PanConfig(topology="tree"))
    tree.add_node(NodeSim(0, role="coordinator"))
    with pytest.raises(UsageError):
        tree.add_node(NodeSim(1, role="router"))


def test_star_routes_through_coordinator():
    net = star((100.0, 0.0), (0.0, 100.0))
    assert net.route(1, 2) == [1, 0, 2]
    assert net.route(1, 0) == [1, 0]


def test_tree_routes_via_common_ancestor():
    net = PanNetwork(PanConfig(topology="tree"))
    net.add_node(NodeSim(0, role="coordinator"))
    net.add_node(NodeSim(1, role="router", parent=0))
    net.add_node(NodeSim(2, role="router", parent=1))
    net.add_node(NodeSim(3, role="end-device", parent=1))
    net.add_node(NodeSim(4, role="end-device", parent=0))
    assert net.route(2, 3) == [2, 1, 3]
    assert net.route(3, 4) == [3, 1, 0, 4]


def test_mesh_uses_relay_beyond_direct_range():
    net = mesh([NodeSim(1, (0.0, 0.0)), NodeSim(2, (1000.0, 0.0)), NodeSim(3, (2000.0, 0.0))])
    assert net.route(1, 3) == [1, 2, 3]
    r = net.transmit(1, 3, b"x" * 20)
    assert r.delivered and r.hops == (1, 2, 3)


def test_mesh_end_devices_do_not_relay():
    net = mesh([NodeSim(1, (0.0, 0.0)), NodeSim(2, (1000.0, 0.0), "end-device"),
                NodeSim(3, (2000.0, 0.0))])
    r = net.transmit(1, 3, b"x")
    assert not r.delivered and r.drop_reason == NO_ROUTE


def test_isolated_node_has_no_route():
    net = mesh([NodeSim(1, (0.0, 0.0)), NodeSim(2, (5000.0, 0.0))])
    assert net.transmit(1, 2, b"x").drop_reason == NO_ROUTE


def test_range_gate_is_inclusive():
    net = star((1500.0, 0.0), (1500.0001, 0.0))
    assert net.transmit(1, 0, b"x").delivered
    assert net.transmit(2, 0, b"x").drop_reason == OUT_OF_RANGE


@pytest.mark.parametrize("n,rate,expected", [(100, 250_000, 0.0032), (1, 250_000, 3.2e-5),
                                             (100, 20_000, 0.04)])
def test_airtime_examples(n, rate, expected):
    assert airtime_s(n, rate) == pytest.approx(expected, rel=1e-12)


def test_loss_extremes():
    net = star((10.0, 0.0), loss=0.0)
    assert sum(net.transmit(1, 0, b"x", now=i).delivered for i in range(100)) == 100
    net = star((10.0, 0.0), loss=1.0)
    assert sum(net.transmit(1, 0, b"x", now=i).delivered for i in range(100)) == 0
    assert net.stats[LOSS] == 100


@pytest.mark.parametrize("seed", [0, 1, 42])
def test_binomial_loss_count(seed):
    # 10k trials at p=0.1: sigma = 30
    net = star((10.0, 0.0), loss=0.1, seed=seed)
    delivered = sum(net.transmit(1, 0, b"x", now=i * 0.01).delivered for i in range(10_000))
    assert abs(delivered - 9000) <= 90


def test_same_seed_same_outcomes():
    def run(seed):
        net = star((10.0, 0.0), (20.0, 0.0), loss=0.3, seed=seed)
        return [net.transmit(1 + i % 2, 0, b"ab", now=i * 0.01).delivered for i in range(500)]
    assert run(5) == run(5)
    assert run(5) != run(6)


def test_advance_releases_by_arrival_time():
    net = star((10.0, 0.0))
    assert net.advance(0) == []
    a = net.transmit(1, 0, b"x" * 100, now=0.0)
    b = net.transmit(1, 0, b"y" * 100, now=0.0)
    assert a.arrival_time_s == pytest.approx(0.0032)
    assert b.arrival_time_s == pytest.approx(0.0064)
    assert net.advance(0.001) == []
    assert net.advance(0.0025) == [a]
    assert net.advance(1.0) == [b]
    with pytest.raises(UsageError):
        net.advance(-1)


def test_queue_overflow_at_twice_capacity():
    net = star((10.0, 0.0))
    reasons = [net.transmit(1, 0, b"z" * 100, now=0.0).drop_reason for _ in range(2 * QUEUE_LIMIT)]
    assert reasons[:QUEUE_LIMIT] == [None] * QUEUE_LIMIT
    assert set(reasons[QUEUE_LIMIT:]) == {OVERFLOW}
    # the queue drains with the clock
    assert net.backlog(1, 1.0) == 0
    assert net.transmit(1, 0, b"z", now=1.0).delivered


def test_outage_window_overrides_loss():
    net = star((10.0, 0.0))
    net.add_outage(Outage(1.0, 2.0))
    assert net.transmit(1, 0, b"x", now=0.5).delivered
    assert net.transmit(1, 0, b"x", now=1.0).drop_reason == LOSS
    assert net.transmit(1, 0, b"x", now=2.0).delivered


def test_conservation_and_throughput_ceiling():
    rng = random.Random(0)
    net = star(*[(rng.uniform(0, 2000), 0.0) for _ in range(6)], loss=0.2, seed=3)
    for i in range(2000):
        net.transmit(rng.randrange(1, 7), 0, bytes(rng.randrange(1, 80)), now=i * 0.001)
    s = net.stats
    assert s["transmitted"] == s["delivered"] + s["dropped"]
    assert s["dropped"] == sum(s[r] for r in (LOSS, OUT_OF_RANGE, NO_ROUTE, OVERFLOW))
    rate = net.cfg.data_rate_bps
    for spans in net.bits_sent.values():
        spans = sorted(spans)
        for (s0, e0, _), (s1, _, _) in zip(spans, spans[1:]):
            assert s1 >= e0 - 1e-12      # one frame on air at a time per node
        window = spans[-1][1] - spans[0][0]
        assert sum(b for _, _, b in spans) <= rate * window * (1 + 1e-9)


# -- mesh routing against exhaustive search --------------------------------

def brute_force_route(net, src, dst):
    best = None
    others = [n for n in sorted(net.nodes) if n not in (src, dst)
              and net.nodes[n].role != "end-device"]
    for k in range(len(others) + 1):
        for middle in itertools.permutations(others, k):
            path = [src, *middle, dst]
            if all(net.in_range(a, b) for a, b in zip(path, path[1:])):
                if best is None or (len(path), path) < (len(best), best):
                    best = path
        if best is not None:
            return best
    return None


def test_mesh_matches_brute_force():
    rng = random.Random(7)
    checked = 0
    for _ in range(300):
        n = rng.randint(2, 8)
        ids = rng.sample(range(1, 50), n)
        nodes = [NodeSim(i, (rng.uniform(0, 4000), rng.uniform(0, 4000)),
                         rng.choice(["router", "router", "end-device"])) for i in ids]
        net = mesh(nodes)
        src, dst = rng.sample(ids, 2)
        expect = brute_force_route(net, src, dst)
        r = net.transmit(src, dst, b"p")
        if expect is None:
            assert r.drop_reason == NO_ROUTE
        else:
            assert list(r.hops) == expect
            checked += 1
    assert checked > 50
