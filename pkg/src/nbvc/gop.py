"""Hierarchical random-access coding plan.

Intra frames sit at every multiple of the intra period; each span between
consecutive anchors is filled by recursive midpoint splitting, breadth-first
(all midpoints of one hierarchy level before the next, smaller frame index
first). A trailing incomplete span is closed by coding its final frame as a
B frame whose two references both point at the last anchor, after which the
interior splits normally.
"""

import json
from dataclasses import dataclass, asdict

from .errors import ShapeMismatchError

FRAME_I = "I"
FRAME_B = "B"


@dataclass(frozen=True)
class PlanEntry:
    frame_index: int
    frame_type: str
    forward_ref: int = None
    backward_ref: int = None
    level: int = 0


@dataclass(frozen=True)
class GopPlan:
    entries: tuple
    intra_period: int
    num_frames: int


def _span_midpoints(lo, hi, first_level):
    """Breadth-first midpoint split of the open interval (lo, hi)."""
    out = []
    frontier = [(lo, hi)]
    level = first_level
    while frontier:
        next_frontier = []
        row = []
        for a, b in frontier:
            if b - a < 2:
                continue
            mid = (a + b) // 2
            row.append(PlanEntry(mid, FRAME_B, forward_ref=a, backward_ref=b, level=level))
            next_frontier.append((a, mid))
            next_frontier.append((mid, b))
        out.extend(sorted(row, key=lambda e: e.frame_index))
        frontier = next_frontier
        level += 1
    return out


def build_gop_plan(num_frames: int, intra_period: int) -> GopPlan:
    if num_frames < 1:
        raise ShapeMismatchError(f"num_frames must be >= 1, got {num_frames}")
    if intra_period < 2:
        raise ShapeMismatchError(f"intra_period must be >= 2, got {intra_period}")

    anchors = list(range(0, num_frames, intra_period))
    last = num_frames - 1
    ordered = []
    for i, anchor in enumerate(anchors):
        ordered.append(PlanEntry(anchor, FRAME_I, level=0))
        if i > 0:
            ordered.extend(_span_midpoints(anchors[i - 1], anchor, first_level=1))
    if anchors[-1] < last:
        # Trailing incomplete span: close with a degenerate B, then split.
        ordered.append(
            PlanEntry(last, FRAME_B, forward_ref=anchors[-1], backward_ref=anchors[-1], level=1)
        )
        ordered.extend(_span_midpoints(anchors[-1], last, first_level=2))

    plan = GopPlan(entries=tuple(ordered), intra_period=intra_period, num_frames=num_frames)
    _validate_plan(plan)
    return plan


def _validate_plan(plan: GopPlan):
    seen = set()
    coded = set()
    for entry in plan.entries:
        if entry.frame_index in seen:
            raise ShapeMismatchError(f"frame {entry.frame_index} planned twice")
        seen.add(entry.frame_index)
        if entry.frame_type == FRAME_B:
            if entry.forward_ref not in coded or entry.backward_ref not in coded:
                raise ShapeMismatchError(
                    f"frame {entry.frame_index} references an uncoded frame"
                )
        coded.add(entry.frame_index)
    if seen != set(range(plan.num_frames)):
        raise ShapeMismatchError("plan does not cover every frame exactly once")


def coding_order(plan: GopPlan):
    """Frame indices in coding order (entries are stored in that order)."""
    return [entry.frame_index for entry in plan.entries]


def intra_indices(plan: GopPlan):
    return [e.frame_index for e in plan.entries if e.frame_type == FRAME_I]


def span_summary(plan: GopPlan):
    """(intra indices, complete span count, incomplete span count)."""
    anchors = intra_indices(plan)
    complete = sum(
        1 for a in anchors if a + plan.intra_period in set(anchors)
    )
    incomplete = 1 if (anchors[-1] < plan.num_frames - 1) else 0
    return anchors, complete, incomplete


def plan_to_json_lines(plan: GopPlan):
    return "\n".join(json.dumps(asdict(entry)) for entry in plan.entries)


def plan_entry_for_frame(plan: GopPlan, frame_index: int) -> PlanEntry:
    for entry in plan.entries:
        if entry.frame_index == frame_index:
            return entry
    raise ShapeMismatchError(f"frame {frame_index} not in plan")
