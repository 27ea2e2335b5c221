"""Work consistency and work intensity profiles.

Consistency is the median number of active days per week; intensity is the
median number of actions on an active day. Weeks are consecutive 7-day bins
anchored at the user's first action inside the window and run through the
week of the last action, so silent weeks in between count as zero days.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .eventlog import EventLog
from .types import DAY, ActionClass


@dataclass(frozen=True)
class Window:
    """Half-open UTC interval ``[start, end)`` in epoch seconds."""

    start: int
    end: int

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("window end precedes start")

    @property
    def empty(self) -> bool:
        return self.end <= self.start


@dataclass(frozen=True)
class ActivityProfile:
    user_id: int
    window: Window
    consistency: float
    intensity: float
    weekly_consistency: tuple = field(default=(), repr=False)
    weekly_intensity: tuple = field(default=(), repr=False)

    @property
    def n_weeks(self) -> int:
        return len(self.weekly_consistency)

    @property
    def rate(self) -> float:
        """Expected actions per week, consistency times intensity."""
        return self.consistency * self.intensity

    @property
    def active(self) -> bool:
        return self.n_weeks > 0


def lower_median(values) -> float:
    """Median taking the lower middle element for even counts."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("median of an empty sequence")
    return float(v[(v.size - 1) // 2])


def _median(values, convention: str) -> float:
    if convention == "lower":
        return lower_median(values)
    if convention == "midpoint":
        return float(np.median(values))
    raise ValueError(f"unknown median convention {convention!r}")


def _window_events(events: EventLog, user: int, window: Window, action_class) -> EventLog:
    ev = events.for_user(user)
    if action_class is not None:
        ev = ev.of_class(action_class)
    return ev.between(window.start, window.end)


def daily_series(
    events: EventLog,
    user: int,
    window: Window,
    action_class: ActionClass | None = ActionClass.Edit,
) -> dict[int, int]:
    """Map day index (days since ``window.start``) to action count; absent days are zero."""
    if window.empty:
        return {}
    ev = _window_events(events, user, window, action_class)
    days, counts = np.unique((ev.ts - window.start) // DAY, return_counts=True)
    return {int(d): int(c) for d, c in zip(days, counts)}


def profile_from_days(
    user: int,
    window: Window,
    days,
    counts,
    median: str = "lower",
    zero_weeks: bool = True,
) -> ActivityProfile:
    """Profile from sorted active-day indices and their (positive) action counts."""
    days = np.asarray(days, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    if days.size == 0:
        return ActivityProfile(user, window, 0.0, 0.0)
    week = (days - days[0]) // 7
    n_weeks = int(week[-1]) + 1
    active_days = np.bincount(week, minlength=n_weeks)
    totals = np.bincount(week, weights=counts, minlength=n_weeks)
    busy = active_days > 0
    weekly_i = totals[busy] / active_days[busy]
    weekly_c = active_days if zero_weeks else active_days[busy]
    return ActivityProfile(
        user_id=user,
        window=window,
        consistency=_median(weekly_c, median),
        intensity=_median(counts, median),
        weekly_consistency=tuple(int(c) for c in weekly_c),
        weekly_intensity=tuple(float(i) for i in weekly_i),
    )


def profile(
    events: EventLog,
    user: int,
    window: Window,
    action_class: ActionClass | None = ActionClass.Edit,
    median: str = "lower",
    zero_weeks: bool = True,
) -> ActivityProfile:
    if window.empty:
        raise ValueError("profile window is empty")
    ev = _window_events(events, user, window, action_class)
    days, counts = np.unique((ev.ts - window.start) // DAY, return_counts=True)
    return profile_from_days(user, window, days, counts, median=median, zero_weeks=zero_weeks)


def profile_from_timestamps(user: int, window: Window, ts, **kw) -> ActivityProfile:
    """Profile of pre-filtered qualifying action timestamps (sorted or not)."""
    ts = np.asarray(ts, np.int64)
    ts = ts[(ts >= window.start) & (ts < window.end)]
    days, counts = np.unique((ts - window.start) // DAY, return_counts=True)
    return profile_from_days(user, window, days, counts, **kw)


def profiles_matrix(profiles: Iterable[ActivityProfile]) -> np.ndarray:
    """Stack profiles into an ``(n, 2)`` array of (consistency, intensity)."""
    rows = [(p.consistency, p.intensity) for p in profiles]
    return np.asarray(rows, dtype=float).reshape(-1, 2)


PROFILE_COLUMNS = ["user_id", "window_start", "window_end", "consistency", "intensity", "rate", "n_weeks"]


def write_profiles_csv(profiles: Iterable[ActivityProfile], fh: IO[str], schema_comment: str | None = None):
    if schema_comment:
        fh.write(schema_comment + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for p in profiles:
        w.writerow([
            p.user_id, p.window.start, p.window.end,
            _fmt(p.consistency), _fmt(p.intensity), _fmt(p.rate), p.n_weeks,
        ])


def _fmt(x: float) -> str:
    return repr(float(x))
