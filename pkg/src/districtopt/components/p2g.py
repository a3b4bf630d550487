"""Power-to-gas OFF/HOT/ON state machine: reference automaton and MIL rows."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

from ..milp import GE, LE, LinExpr

OFF, HOT, ON = "off", "hot", "on"

# transition name -> (from state, to state)
TRANSITIONS = {
    "off2hot": (OFF, HOT),
    "hot2off": (HOT, OFF),
    "hot2on": (HOT, ON),
    "on2hot": (ON, HOT),
}


def accepts(states: Sequence[str], initial_state: str = OFF, steps_in_state: Optional[int] = None,
            off_hot_steps: int = 1, hot_off_steps: int = 1) -> bool:
    """Whether ``states`` is a legal trajectory following the given history.

    The history is ``initial_state`` held for ``steps_in_state`` steps
    (``None`` = indefinitely) right before the first entry of ``states``.
    OFF and ON are never adjacent; OFF must last ``off_hot_steps`` before
    HOT, and HOT must last ``hot_off_steps`` before OFF.
    """
    cur = initial_state
    run = float("inf") if steps_in_state is None else steps_in_state
    for s in states:
        if s not in (OFF, HOT, ON):
            return False
        if s != cur:
            if {s, cur} == {OFF, ON}:
                return False
            if cur == OFF and s == HOT and run < off_hot_steps:
                return False
            if cur == HOT and s == OFF and run < hot_off_steps:
                return False
            cur, run = s, 1
        else:
            run += 1
    return True


def and_rows(trans: LinExpr, x_prev: LinExpr, y_now: LinExpr):
    """Rows making ``trans`` the logical AND of ``x_prev`` and ``y_now``."""
    return [
        (trans - x_prev, LE, 0.0),
        (trans - y_now, LE, 0.0),
        (trans - x_prev - y_now, GE, -1.0),
    ]


def lagged_rows(trans: LinExpr, x_at: Callable[[int], LinExpr], y_now: LinExpr, lag: int):
    """AND rows with a dwell lag.

    ``x_at(i)`` is the source-state indicator ``i`` steps back. The
    indicator is forced to 1 whenever the transition happens (source at
    ``-1``, target now) and may only be 1 if the source state held for all
    ``lag`` previous steps, which forbids early transitions.
    """
    rows = [(trans - x_at(1), LE, 0.0), (trans - y_now, LE, 0.0)]
    for i in range(2, lag + 1):
        rows.append((trans - x_at(i), LE, 0.0))
    rows.append((trans - x_at(1) - y_now, GE, -1.0))
    return rows


def decode_states(off, hot, on) -> list[str]:
    """States from indicator values, thresholded at 0.5."""
    out = []
    for a, b, c in zip(off, hot, on):
        picked = [s for s, v in ((OFF, a), (HOT, b), (ON, c)) if v > 0.5]
        if len(picked) != 1:
            raise ValueError(f"indicators ({a}, {b}, {c}) do not select exactly one state")
        out.append(picked[0])
    return out
