from conftest import Sink
from readbft.client import Client, Op, ReplyCollector, required_replies
from readbft.messages import Kind, Reply
from readbft.protocol_core import SystemParams
from readbft.replica import ReadQuorum
from readbft.simnet import NetConfig, Simulator

P = SystemParams(4, 1)


def test_required_replies():
    assert required_replies(P, ReadQuorum.OPTIMIZED) == 3
    assert required_replies(P, ReadQuorum.NAIVE) == 2
    assert required_replies(SystemParams(7, 2), ReadQuorum.OPTIMIZED) == 5


def test_collector_counts_one_vote_per_replica():
    col = ReplyCollector(1, 3, ordered=True)
    assert col.add(Reply(1, 0, "a", True, 1)) is None
    assert col.add(Reply(1, 0, "a", True, 1)) is None
    assert col.add(Reply(1, 1, "b", True, 1)) is None
    assert col.max_matching == 1
    assert col.add(Reply(1, 2, "a", True, 1)) is None
    assert col.add(Reply(1, 3, "a", True, 1)) == "a"
    assert col.max_matching == 3


def test_collector_ignores_other_phase_and_seq():
    col = ReplyCollector(2, 2, ordered=True)
    assert col.add(Reply(2, 0, "a", False, 1)) is None
    assert col.add(Reply(1, 1, "a", True, 1)) is None
    assert col.replies == {}


def _client(ops, **kw):
    sim = Simulator(NetConfig(delay=10))
    replicas = [Sink(f"r{i}") for i in range(4)]
    for r in replicas:
        sim.add_node(r)
    c = Client(0, P, ops, **kw)
    sim.add_node(c)
    sim.start()
    sim.run(sim.now + 15)
    return sim, c, replicas


def _answer(sim, c, replicas, result, ordered, who=(0, 1, 2)):
    for i in who:
        sim.send(f"r{i}", "c0", Reply(c.seq, i, result, ordered, 1))
    sim.run(sim.now + 15)


def test_update_completes_on_quorum_of_matching_replies():
    sim, c, replicas = _client([Op(Kind.UPDATE, "x", "1")])
    assert all(r.of_type("REQUEST") for r in replicas)
    _answer(sim, c, replicas, "ok/1", True, who=(0, 1))
    assert c.completed == 0 and c.max_matching == 2
    _answer(sim, c, replicas, "ok/1", True, who=(2,))
    assert c.done and c.latencies == [30]
    op = c.history[0]
    assert (op.kind, op.key, op.value, op.invoke, op.response) == ("update", "x", "1", 0, 30)


def test_fast_read_falls_back_to_ordered_with_same_seq():
    sim, c, replicas = _client([Op(Kind.READ, "x")], read_timeout=50)
    assert replicas[0].of_type("READ")[0].request.client_seq == 1
    _answer(sim, c, replicas, "0", False, who=(0, 1))
    sim.run(60)
    assert c.fallbacks == 1
    assert replicas[0].of_type("REQUEST")[0].request.client_seq == 1
    _answer(sim, c, replicas, "0", False, who=(2,))  # fast replies no longer count
    assert not c.done
    _answer(sim, c, replicas, "7", True)
    assert c.done and c.history[0].value == "7"


def test_reads_without_fast_path_are_ordered():
    sim, c, replicas = _client([Op(Kind.READ, "x")], fast_reads=False)
    assert replicas[0].of_type("READ") == [] and len(replicas[0].of_type("REQUEST")) == 1


def test_retransmits_until_answered():
    sim, c, replicas = _client([Op(Kind.UPDATE, "x", "1")], retransmit=100)
    sim.run(350)
    assert len(replicas[1].of_type("REQUEST")) == 4


def test_impersonated_reply_is_ignored():
    sim, c, replicas = _client([Op(Kind.UPDATE, "x", "1")])
    for i in (1, 2, 3):
        sim.send("r0", "c0", Reply(1, i, "ok/1", True, 1))
    sim.run(sim.now + 15)
    assert c.completed == 0


def test_closed_loop_with_think_time_and_pending_record():
    sim, c, replicas = _client([Op(Kind.UPDATE, "x", "1"), Op(Kind.UPDATE, "x", "2")], think=100)
    _answer(sim, c, replicas, "ok/1", True)
    sim.run(sim.now + 50)
    assert c.seq == 1
    sim.run(sim.now + 100)
    assert c.seq == 2
    pending = c.pending_operation()
    assert pending.response is None and pending.value == "2" and pending.seq == 2
