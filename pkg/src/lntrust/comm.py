"""Byte accounting for the output-only protocol.

Only feature payloads (queries) and prediction vectors cross an edge; every
other message kind is rejected, which is how the ledger enforces that labels,
parameters and gradients never leave a node.
"""

from collections import defaultdict
from dataclasses import dataclass, field

BYTES_PER_VALUE = 4  # float32 on the wire

# kind -> what one "count" unit carries
PAYLOAD_KINDS = {"query": "features", "probe_query": "features"}
LOGIT_KINDS = {"response": "logits", "probe_response": "logits", "share": "logits"}
KINDS = {**PAYLOAD_KINDS, **LOGIT_KINDS}


class ProtocolViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class Message:
    round: int
    sender: int
    receiver: int
    kind: str
    count: int
    nbytes: int


@dataclass
class CommLedger:
    graph: object
    messages: list = field(default_factory=list)

    def totals(self):
        by_kind = defaultdict(int)
        for m in self.messages:
            by_kind[m.kind] += m.nbytes
        logits = sum(v for k, v in by_kind.items() if k in LOGIT_KINDS)
        payload = sum(v for k, v in by_kind.items() if k in PAYLOAD_KINDS)
        return {
            "by_kind": {k: by_kind.get(k, 0) for k in sorted(KINDS)},
            "logit_bytes": logits,
            "payload_bytes": payload,
            "total_bytes": logits + payload,
            "training_logit_bytes": by_kind.get("response", 0) + by_kind.get("share", 0),
        }

    def bytes_in_round(self, r, kinds=None):
        return sum(m.nbytes for m in self.messages if m.round == r and (kinds is None or m.kind in kinds))

    def cumulative(self, upto_round, kinds=None):
        return sum(m.nbytes for m in self.messages if m.round <= upto_round and (kinds is None or m.kind in kinds))

    def per_node(self):
        sent = defaultdict(int)
        received = defaultdict(int)
        for m in self.messages:
            sent[m.sender] += m.nbytes
            received[m.receiver] += m.nbytes
        n = self.graph.n
        return {"sent": [sent[i] for i in range(n)], "received": [received[i] for i in range(n)]}

    def summary(self):
        out = self.totals()
        out["n_messages"] = len(self.messages)
        out["per_node"] = self.per_node()
        rounds = sorted({m.round for m in self.messages})
        out["per_round"] = {str(r): self.bytes_in_round(r) for r in rounds}
        return out


def message_bytes(kind, count, C, d):
    if kind not in KINDS:
        raise ProtocolViolation(f"message kind {kind!r} may not cross an edge")
    width = d if kind in PAYLOAD_KINDS else C
    return int(count) * int(width) * BYTES_PER_VALUE


def account_message(ledger, sender, receiver, kind, count, C, d, round_=0):
    """Record one message; self-messages are free, non-edges are violations."""
    nbytes = message_bytes(kind, count, C, d)
    if sender == receiver:
        return ledger
    if not ledger.graph.has_edge(sender, receiver):
        raise ProtocolViolation(f"no edge between {sender} and {receiver}")
    ledger.messages.append(Message(int(round_), int(sender), int(receiver), kind, int(count), nbytes))
    return ledger
