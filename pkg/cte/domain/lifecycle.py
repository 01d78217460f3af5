"""CT-e lifecycle state machine."""

from __future__ import annotations

from enum import Enum

from .errors import IllegalTransition


class LifecycleStatus(str, Enum):
    DRAFT = "Draft"
    BATCHED = "Batched"
    TRANSMITTED = "Transmitted"
    PROCESSING = "Processing"
    APPROVED = "Approved"
    REJECTED = "Rejected"
    CANCELLING = "Cancelling"
    CANCELLED = "Cancelled"
    CANCELLING_NUMBERING = "CancellingNumbering"
    NUMBERING_CANCELLED = "NumberingCancelled"

    def __str__(self):
        return self.value

    @property
    def is_terminal(self) -> bool:
        return self in TERMINAL_STATES


class LifecycleEvent(str, Enum):
    PACKED = "Packed"
    RECEIPT_RECEIVED = "ReceiptReceived"
    BATCH_REFUSED = "BatchRefused"
    LOCALLY_REFUSED = "LocallyRefused"
    TRACKED_PROCESSING = "TrackedProcessing"
    DOCUMENT_APPROVED = "DocumentApproved"
    DOCUMENT_REJECTED = "DocumentRejected"
    WITHDRAW_SENT = "WithdrawSent"
    WITHDRAW_CANCELLED = "WithdrawCancelled"
    WITHDRAW_REJECTED = "WithdrawRejected"
    NUMBERING_WITHDRAW_SENT = "NumberingWithdrawSent"
    NUMBERING_CANCELLED = "NumberingCancelled"
    NUMBERING_REJECTED = "NumberingRejected"

    def __str__(self):
        return self.value


TERMINAL_STATES = frozenset(
    {
        LifecycleStatus.REJECTED,
        LifecycleStatus.CANCELLED,
        LifecycleStatus.NUMBERING_CANCELLED,
    }
)

S = LifecycleStatus
E = LifecycleEvent

TRANSITIONS: dict[tuple[LifecycleStatus, LifecycleEvent], LifecycleStatus] = {
    (S.DRAFT, E.PACKED): S.BATCHED,
    (S.DRAFT, E.LOCALLY_REFUSED): S.REJECTED,
    (S.DRAFT, E.NUMBERING_WITHDRAW_SENT): S.CANCELLING_NUMBERING,
    (S.BATCHED, E.RECEIPT_RECEIVED): S.TRANSMITTED,
    (S.BATCHED, E.BATCH_REFUSED): S.REJECTED,
    (S.TRANSMITTED, E.TRACKED_PROCESSING): S.PROCESSING,
    (S.TRANSMITTED, E.DOCUMENT_APPROVED): S.APPROVED,
    (S.TRANSMITTED, E.DOCUMENT_REJECTED): S.REJECTED,
    (S.PROCESSING, E.DOCUMENT_APPROVED): S.APPROVED,
    (S.PROCESSING, E.DOCUMENT_REJECTED): S.REJECTED,
    (S.APPROVED, E.WITHDRAW_SENT): S.CANCELLING,
    (S.CANCELLING, E.WITHDRAW_CANCELLED): S.CANCELLED,
    (S.CANCELLING, E.WITHDRAW_REJECTED): S.APPROVED,
    (S.CANCELLING_NUMBERING, E.NUMBERING_CANCELLED): S.NUMBERING_CANCELLED,
    (S.CANCELLING_NUMBERING, E.NUMBERING_REJECTED): S.DRAFT,
}

del S, E


def transition(current: LifecycleStatus, event: LifecycleEvent) -> LifecycleStatus:
    try:
        return TRANSITIONS[(LifecycleStatus(current), LifecycleEvent(event))]
    except (KeyError, ValueError):
        raise IllegalTransition(current, event) from None


def is_legal_path(statuses: list[LifecycleStatus]) -> bool:
    """True when each consecutive pair is joined by some legal event."""
    edges = {(src, dst) for (src, _), dst in TRANSITIONS.items()}
    path = [LifecycleStatus(status) for status in statuses]
    return all((a, b) in edges for a, b in zip(path, path[1:]))


def reachable_states(start: LifecycleStatus = LifecycleStatus.DRAFT) -> set[LifecycleStatus]:
    seen = {start}
    frontier = [start]
    while frontier:
        state = frontier.pop()
        for (src, _), dst in TRANSITIONS.items():
            if src == state and dst not in seen:
                seen.add(dst)
                frontier.append(dst)
    return seen


def event_for(current: LifecycleStatus, target: LifecycleStatus) -> LifecycleEvent:
    """The event that moves `current` to `target`; IllegalTransition when none does."""
    current, target = LifecycleStatus(current), LifecycleStatus(target)
    for (src, event), dst in TRANSITIONS.items():
        if src is current and dst is target:
            return event
    raise IllegalTransition(current, f"-> {target}")
