import dataclasses

import pytest
from hypothesis import given, strategies as st

from conftest import Lone, P4, proof_for, upd
from readbft.checkpoint import Checkpoint, NoMatchingCheckpoint, select_checkpoint, snapshot
from readbft.messages import OrderedRequest, Report, StateReply, StateRequest
from readbft.protocol_core import MacAuthenticator, Phase, attest, batch_digest, make_prepared_cert
from readbft.replica import compute_sync_plan


def ck(up_to, value="a", replies=True):
    return snapshot(up_to, {"x": value}, {0: up_to}, {0: (up_to, "ok/" + value)}, replies)


def test_snapshot_is_sorted_and_optionally_carries_replies():
    c = snapshot(4, {"b": "2", "a": "1"}, {1: 3, 0: 2}, {1: (3, "r")}, True)
    assert c.app == (("a", "1"), ("b", "2"))
    assert c.last_seq == ((0, 2), (1, 3))
    assert c.replies == ((1, 3, "r"),)
    assert snapshot(4, {}, {}, {1: (3, "r")}, False).replies is None


def test_state_digest_ignores_the_proof():
    a = ck(8)
    assert a.state_digest == dataclasses.replace(a, proof="anything").state_digest
    assert a.state_digest != ck(8, "b").state_digest
    assert a.state_digest != ck(8, replies=False).state_digest


def test_select_needs_f_plus_one_matching():
    good, bad = ck(8), ck(8, "evil")
    assert select_checkpoint([(1, good), (2, good)], f=1) == good
    with pytest.raises(NoMatchingCheckpoint):
        select_checkpoint([(1, good), (2, bad)], f=1)
    with pytest.raises(NoMatchingCheckpoint):
        select_checkpoint([(1, good), (1, good)], f=1)  # one sender counts once


def test_select_prefers_highest_and_respects_after():
    low, high = ck(8), ck(16)
    replies = [(1, low), (2, low), (2, high), (3, high)]
    assert select_checkpoint(replies, f=1) == high
    with pytest.raises(NoMatchingCheckpoint):
        select_checkpoint(replies, f=1, after=16)


@given(st.lists(st.tuples(st.integers(0, 6), st.sampled_from([4, 8, 12]), st.sampled_from("ab")), max_size=20))
def test_select_checkpoint_against_brute_force(raw):
    replies = [(s, ck(u, v)) for s, u, v in raw]
    support = {}
    for s, c in replies:
        support.setdefault((c.up_to, c.state_digest), set()).add(s)
    ok = [k for k, v in support.items() if len(v) >= 3]
    if not ok:
        with pytest.raises(NoMatchingCheckpoint):
            select_checkpoint(replies, f=2)
    else:
        got = select_checkpoint(replies, f=2)
        assert (got.up_to, got.state_digest) == max(ok)


# --- state transfer and the reply store ----------------------------------

def test_state_request_offers_checkpoints_above_the_gap():
    lone = Lone(checkpoint_period=2)
    for c in range(1, 5):
        batch = (upd(0, c, "x", str(c)),)
        lone.replica.decide(c, batch, proof_for(lone, c, batch), via="fwd")
    lone.inject("r2", StateRequest(2))
    offer = lone.sinks["r2"].of_type("STATE-REPLY")[0]
    assert [c.up_to for c in offer.checkpoints] == [4]


def _recover(reply_store):
    lone = Lone(checkpoint_reply_store=reply_store)
    lone.replica.start_state_transfer()
    lone.sim.run(lone.sim.now + 5)
    remote = snapshot(40, {"v": "victim"}, {0: 1}, {0: (1, "ok/victim")}, reply_store)
    for s in (2, 3):
        lone.inject(f"r{s}", StateReply((remote,), 0))
    return lone


def test_recovered_replica_answers_retransmission_from_reply_store():
    lone = _recover(True)
    r = lone.replica
    assert r.last_executed == 40 and r.app == {"v": "victim"} and not r.st_active
    assert [x.inst for x in lone.sim.trace.of_kind("install")] == [40]
    lone.inject("c0", OrderedRequest(upd(0, 1, "v", "victim")))
    replies = lone.sinks["c0"].of_type("REPLY")
    assert [(m.client_seq, m.result, m.ordered) for m in replies] == [(1, "ok/victim", True)]


def test_without_reply_store_the_retransmission_goes_unanswered():
    lone = _recover(False)
    lone.inject("c0", OrderedRequest(upd(0, 1, "v", "victim")))
    assert lone.sinks["c0"].of_type("REPLY") == []
    assert lone.replica.pending == {}  # not re-executed either


def test_state_reply_needs_f_plus_one_senders():
    lone = Lone()
    lone.replica.start_state_transfer()
    lone.inject("r2", StateReply((ck(8),), 0))
    assert lone.replica.last_executed == 0
    lone.inject("r3", StateReply((ck(8, "evil"),), 0))
    assert lone.replica.last_executed == 0
    lone.inject("r0", StateReply((ck(8),), 0))
    assert lone.replica.last_executed == 8


def test_install_adopts_regency_vouched_by_f_plus_one():
    lone = Lone()
    lone.replica.start_state_transfer()
    lone.inject("r2", StateReply((ck(8),), 5))
    lone.inject("r3", StateReply((ck(8),), 3))
    assert lone.replica.regency == 3


# --- leader-change plan --------------------------------------------------

AUTH = MacAuthenticator(4, seed=7)
B = (upd(0, 1, "x", "a"),)


def _report(sender, low=0, decided=(), prepared=()):
    return Report(sender, 1, low, tuple(decided), tuple(prepared))


def _cert(c, view, batch, signers=(0, 1, 2)):
    d = batch_digest(c, batch)
    atts = [attest(AUTH, s, Phase.PREPARE, c, view, d) for s in signers]
    return make_prepared_cert(P4, c, view, batch, atts)


def _proof(c, batch):
    from readbft.protocol_core import make_proof

    d = batch_digest(c, batch)
    return make_proof(P4, c, d, [attest(AUTH, s, Phase.ACCEPT, c, 0, d) for s in (0, 1, 2)])


def test_plan_keeps_decisions_and_reproposes_prepared_values():
    proof = _proof(2, B)
    b3 = (upd(1, 1, "y", "b"),)
    reports = [_report(0, low=1, decided=[(2, B, proof)]), _report(1, low=1, prepared=[_cert(3, 0, b3)]),
               _report(2, low=1)]
    plan = compute_sync_plan(P4, AUTH, reports)
    assert plan.decisions == ((2, B, proof),)
    assert plan.reproposals == ((3, b3),)
    assert (plan.low, plan.high) == (1, 3)


def test_plan_fills_gaps_with_empty_batches_and_prefers_higher_views():
    old, new = (upd(0, 1, "x", "old"),), (upd(0, 1, "x", "new"),)
    reports = [_report(0, prepared=[_cert(3, 0, old)]), _report(1, prepared=[_cert(3, 1, new)]), _report(2)]
    plan = compute_sync_plan(P4, AUTH, reports)
    assert plan.reproposals == ((1, ()), (2, ()), (3, new))


def test_plan_ignores_forged_evidence():
    proof = _proof(1, B)
    forged = dataclasses.replace(proof, attestations=proof.attestations[:2])
    bad_cert = _cert(2, 0, B)
    bad_cert = dataclasses.replace(bad_cert, batch=(upd(9, 9),))
    reports = [_report(0, decided=[(1, B, forged)], prepared=[bad_cert]), _report(1), _report(2)]
    plan = compute_sync_plan(P4, AUTH, reports)
    assert plan.decisions == () and plan.reproposals == ()
    assert plan.high == 0  # forged evidence does not even open empty slots


def test_plan_is_independent_of_report_order():
    reports = [_report(0, prepared=[_cert(2, 0, B)]), _report(1, low=1), _report(2)]
    assert compute_sync_plan(P4, AUTH, reports) == compute_sync_plan(P4, AUTH, reports[::-1])
