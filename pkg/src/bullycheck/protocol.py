"""Per-node election kernel: node state, messages and the update rule.

Everything here is a pure function on immutable values. The simulator and the
verifiers all call :func:`update_node`, so the transition rule lives in exactly
one place.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum


class ElectionState(str, Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    LEADER = "leader"

    def __str__(self) -> str:
        return self.value


class Mode(str, Enum):
    ON = "on"
    OFF = "off"

    def __str__(self) -> str:
        return self.value


_PROMOTE = {
    ElectionState.FOLLOWER: ElectionState.CANDIDATE,
    ElectionState.CANDIDATE: ElectionState.LEADER,
    ElectionState.LEADER: ElectionState.LEADER,
}


@dataclass(frozen=True)
class Message:
    sender_id: int
    state: ElectionState

    def __post_init__(self) -> None:
        if self.sender_id < 1:
            raise ValueError(f"node ids must be >= 1, got {self.sender_id}")


@dataclass(frozen=True)
class NodeCore:
    """Protocol-visible state of one node.

    ``even_activation`` selects whether the next activation runs the election
    code (read mailbox, demote or promote) or only flips the flag and sends.
    """

    id: int
    state: ElectionState = ElectionState.FOLLOWER
    even_activation: bool = True
    mailbox: tuple[Message, ...] = ()

    def __post_init__(self) -> None:
        if self.id < 1:
            raise ValueError(f"node ids must be >= 1, got {self.id}")


def enqueue_message(node: NodeCore, m: Message) -> NodeCore:
    return replace(node, mailbox=node.mailbox + (m,))


def next_state(state: ElectionState, higher_id_received: bool) -> ElectionState:
    """State after one executed election block."""
    if higher_id_received:
        return ElectionState.FOLLOWER
    return _PROMOTE[state]


def update_node(node: NodeCore) -> tuple[NodeCore, Message]:
    """Run one activation of ``node``.

    On an even activation the whole mailbox is drained: any sender with a
    larger id demotes the node to follower, otherwise it climbs one step of
    follower -> candidate -> leader. The parity flag is flipped on every
    activation and the outgoing message carries the state after the block.
    """
    state = node.state
    mailbox = node.mailbox
    if node.even_activation:
        higher = any(m.sender_id > node.id for m in mailbox)
        state = next_state(state, higher)
        mailbox = ()
    updated = NodeCore(node.id, state, not node.even_activation, mailbox)
    return updated, Message(node.id, state)
