import pytest

from readbft.messages import Accept, Kind, Prepare, Propose, Request
from readbft.protocol_core import MacAuthenticator, Phase, SystemParams, attest, batch_digest
from readbft.replica import Mode, Replica, ReplicaConfig
from readbft.simnet import NetConfig, Simulator

P4 = SystemParams(4, 1)


class Sink:
    """A node that only records what it receives."""

    def __init__(self, name):
        self.name = name
        self.inbox = []

    def attach(self, sim):
        self.sim = sim

    def start(self):
        pass

    def on_message(self, src, msg):
        self.inbox.append((src, msg))

    def on_timer(self, tid):
        pass

    def of_type(self, t):
        return [m for _, m in self.inbox if m.TYPE == t]


class Lone:
    """One real replica surrounded by sinks; tests play the other replicas."""

    def __init__(self, rid=1, mode=Mode.BASELINE, params=P4, **cfg):
        self.params = params
        self.auth = MacAuthenticator(params.n, seed=7)
        self.sim = Simulator(NetConfig(delay=1))
        self.replica = Replica(rid, params, ReplicaConfig(mode=mode, **cfg), self.auth)
        self.sim.add_node(self.replica)
        self.sinks = {}
        for i in range(params.n):
            if i != rid:
                self.sinks[f"r{i}"] = Sink(f"r{i}")
                self.sim.add_node(self.sinks[f"r{i}"])
        for c in range(4):
            self.sinks[f"c{c}"] = Sink(f"c{c}")
            self.sim.add_node(self.sinks[f"c{c}"])
        self.sim.start()

    @property
    def name(self):
        return self.replica.name

    def inject(self, src, msg, run=True):
        self.sim.send(src, self.name, msg)
        if run:
            self.sim.run(self.sim.now + 5)

    def vote(self, signer, phase, c, view, digest):
        att = attest(self.auth, signer, phase, c, view, digest)
        return Prepare(att) if phase == Phase.PREPARE else Accept(att)

    def sent(self, t=None, dst=None):
        return [r for r in self.sim.trace.of_kind("send")
                if r.node == self.name and (t is None or r.type == t) and (dst is None or r.peer == dst)]

    def drive_to_decision(self, c, batch, view=0, accept_from=(0, 2, 3)):
        """Deliver a proposal and enough votes for the replica to decide ``c``."""
        d = batch_digest(c, batch)
        leader = f"r{view % self.params.n}"
        if self.name != leader:
            self.inject(leader, Propose(view, c, tuple(batch), d))
        for s in (0, 2, 3):
            if s != self.replica.id:
                self.inject(f"r{s}", self.vote(s, Phase.PREPARE, c, view, d))
        for s in accept_from:
            if s != self.replica.id:
                self.inject(f"r{s}", self.vote(s, Phase.ACCEPT, c, view, d))
        return d


def upd(client, seq, key="k", value="v"):
    return Request(client, seq, Kind.UPDATE, key, value)


def rd(client, seq, key="k"):
    return Request(client, seq, Kind.READ, key)


@pytest.fixture
def lone():
    return Lone()


def proof_for(lone, c, batch, signers=(0, 2, 3), view=0):
    from readbft.protocol_core import make_proof

    d = batch_digest(c, batch)
    atts = [attest(lone.auth, s, Phase.ACCEPT, c, view, d) for s in signers]
    return make_proof(lone.params, c, d, atts)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
