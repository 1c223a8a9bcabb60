import pytest

from readbft.adversary import (
    DROP, PASS, Adversary, AttackPolicy, Replace, Variant, conflicting_batch, randomized_adversary,
)
from readbft.messages import Accept, CheckpointMsg, Propose, Reply, Request, Kind, Stop
from readbft.protocol_core import MacAuthenticator, Phase, SystemParams, attest, batch_digest

P = SystemParams(4, 1)
AUTH = MacAuthenticator(4, seed=1)
BATCH = (Request(0, 1, Kind.UPDATE, "x", "1"),)
PROP = Propose(0, 1, BATCH, batch_digest(1, BATCH))


def adv(**kw):
    kw.setdefault("controlled", frozenset({0}))
    return Adversary(AttackPolicy(**kw), P, AUTH)


def test_controls_only_its_replicas():
    a = adv()
    assert a.controls("r0")
    assert not a.controls("r1")
    assert not a.controls("c0")


def test_omit_propose_isolates_target():
    a = adv(isolated=frozenset({3}))
    assert a.filter("r0", "r3", PROP, 0) == DROP
    assert a.filter("r0", "r1", PROP, 0) == PASS
    assert a.filter("r0", "r3", Stop(1), 0) == PASS


def test_conflicting_propose_is_well_formed():
    a = adv(isolated=frozenset({3}), variant=Variant.CONFLICTING_PROPOSE)
    out = a.filter("r0", "r3", PROP, 0)
    assert isinstance(out, Replace)
    msg = out.message
    assert msg.digest == batch_digest(1, msg.batch) != PROP.digest
    assert msg.batch == conflicting_batch(1, BATCH)


def test_censors_replies_to_chosen_clients():
    a = adv(censored_clients=frozenset({0}))
    reply = Reply(1, 0, "ok/1", True, 1)
    assert a.filter("r0", "c0", reply, 0) == DROP
    assert a.filter("r0", "c1", reply, 0) == PASS


def test_stale_reads_rewrite_fast_replies_only():
    a = adv(stale_reads=True)
    fast = a.filter("r0", "c1", Reply(1, 0, "5", False, 9), 0)
    assert fast == Replace(Reply(1, 0, "0", False, 0))
    assert a.filter("r0", "c1", Reply(1, 0, "ok/5", True, 9), 0) == PASS


def test_silent_and_crash_variants():
    p7 = SystemParams(7, 2)
    silent = Adversary(AttackPolicy(controlled=frozenset({0, 1}), variant=Variant.SILENT, leader=0), p7,
                       MacAuthenticator(7))
    assert silent.filter("r1", "r2", Stop(1), 0) == DROP
    assert silent.filter("r0", "r2", Stop(1), 0) == PASS
    crash = adv(variant=Variant.CRASH)
    assert crash.filter("r0", "r1", Stop(1), 0) == DROP


def test_drop_types():
    a = adv(drop_types=frozenset({"ACCEPT"}))
    acc = Accept(attest(AUTH, 0, Phase.ACCEPT, 1, 0, PROP.digest))
    assert a.filter("r0", "r1", acc, 0) == DROP
    assert a.filter("r0", "r1", CheckpointMsg(1, b"x"), 0) == PASS


def test_equivocation_is_signed_by_the_controlled_replica():
    a = adv(equivocate_prob=1.0)
    acc = Accept(attest(AUTH, 0, Phase.ACCEPT, 1, 0, PROP.digest))
    out = a.filter("r0", "r1", acc, 0).message
    assert out.att.digest != PROP.digest
    assert out.att.signer == 0 and out.att.verify(AUTH)


def test_policy_validation():
    with pytest.raises(ValueError):
        adv(controlled=frozenset({0, 1}))
    with pytest.raises(ValueError):
        adv(isolated=frozenset({0}))
    with pytest.raises(ValueError):
        adv(isolated=frozenset({7}))
    with pytest.raises(ValueError):
        adv(drop_prob=1.5)


def test_randomized_policy_is_reproducible_and_valid():
    for seed in range(200):
        for params in (P, SystemParams(7, 2)):
            pol = randomized_adversary(seed, params, 3)
            assert pol == randomized_adversary(seed, params, 3)
            pol.validate(params)
    variants = {randomized_adversary(s, P, 2).variant for s in range(200)}
    assert variants == set(Variant)
