"""Columnar, canonically sorted event storage.

Analyses touch millions of events, so they work on parallel numpy columns
rather than lists of :class:`ActionEvent`. Rows are kept sorted by
(user_id, ts, action_type, post_id, comment_len, own_post), which makes the
store independent of input order.
"""

from __future__ import annotations

import io
from array import array
import json
import zipfile
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .ingest import RejectReport, event_record, parse_generic_events
from .types import DAY, ActionClass, ActionEvent, ActionType

_MISSING = -1
_DAY_BITS = 22


class EventLog:
    __slots__ = ("user", "ts", "action", "post", "clen", "own")

    def __init__(self, user, ts, action, post=None, clen=None, own=None, *, presorted=False):
        n = len(user)
        self.user = np.asarray(user, dtype=np.int64)
        self.ts = np.asarray(ts, dtype=np.int64)
        self.action = np.asarray(action, dtype=np.int8)
        self.post = np.full(n, _MISSING, np.int64) if post is None else np.asarray(post, np.int64)
        self.clen = np.full(n, _MISSING, np.int32) if clen is None else np.asarray(clen, np.int32)
        self.own = np.full(n, _MISSING, np.int8) if own is None else np.asarray(own, np.int8)
        if not (len(self.ts) == len(self.action) == len(self.post) == n):
            raise ValueError("event columns must have equal length")
        if not presorted:
            self._canonicalize()

    def _canonicalize(self) -> None:
        order = np.lexsort((self.own, self.clen, self.post, self.action, self.ts, self.user))
        for name in self.__slots__:
            setattr(self, name, getattr(self, name)[order])

    @classmethod
    def empty(cls) -> "EventLog":
        return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int8), presorted=True)

    @classmethod
    def from_events(cls, events: Iterable[ActionEvent]) -> "EventLog":
        # typed arrays keep a streamed dump at ~30 bytes per event
        cols = [array("q"), array("q"), array("b"), array("q"), array("i"), array("b")]
        for e in events:
            cols[0].append(e.user_id)
            cols[1].append(e.ts)
            cols[2].append(int(e.action_type))
            cols[3].append(_MISSING if e.post_id is None else e.post_id)
            cols[4].append(_MISSING if e.comment_len is None else e.comment_len)
            cols[5].append(_MISSING if e.own_post is None else int(e.own_post))
        arrays = [np.frombuffer(c, dtype=c.typecode) if len(c) else np.empty(0, c.typecode) for c in cols]
        order = np.lexsort(arrays[::-1])
        out = []
        for i in range(len(arrays)):
            # drop each unsorted buffer as soon as its sorted copy exists
            out.append(arrays[i][order])
            arrays[i] = cols[i] = None
        return cls(*out, presorted=True)

    @classmethod
    def concat(cls, logs: Iterable["EventLog"]) -> "EventLog":
        logs = list(logs)
        if not logs:
            return cls.empty()
        return cls(*(np.concatenate([getattr(l, f) for l in logs]) for f in cls.__slots__))

    def __len__(self) -> int:
        return len(self.user)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self.__slots__)

    def _take(self, idx) -> "EventLog":
        return EventLog(*(getattr(self, f)[idx] for f in self.__slots__), presorted=True)

    def __iter__(self) -> Iterator[ActionEvent]:
        for i in range(len(self)):
            yield self.event(i)

    def event(self, i: int) -> ActionEvent:
        post, clen, own = int(self.post[i]), int(self.clen[i]), int(self.own[i])
        return ActionEvent(
            user_id=int(self.user[i]),
            ts=int(self.ts[i]),
            action_type=ActionType(int(self.action[i])),
            post_id=None if post == _MISSING else post,
            comment_len=None if clen == _MISSING else clen,
            own_post=None if own == _MISSING else bool(own),
        )

    def users(self) -> np.ndarray:
        return np.unique(self.user)

    def for_user(self, user_id: int) -> "EventLog":
        lo = np.searchsorted(self.user, user_id, "left")
        hi = np.searchsorted(self.user, user_id, "right")
        return self._take(slice(lo, hi))

    def split_by_user(self) -> dict[int, "EventLog"]:
        if not len(self):
            return {}
        cuts = np.flatnonzero(np.diff(self.user)) + 1
        bounds = np.concatenate([[0], cuts, [len(self)]])
        return {
            int(self.user[lo]): self._take(slice(lo, hi)) for lo, hi in zip(bounds[:-1], bounds[1:])
        }

    def select(self, mask) -> "EventLog":
        return self._take(np.asarray(mask, dtype=bool))

    def of_types(self, types: Iterable[ActionType]) -> "EventLog":
        codes = np.array(sorted(int(t) for t in types), dtype=np.int8)
        return self.select(np.isin(self.action, codes))

    def of_class(self, action_class: ActionClass) -> "EventLog":
        return self.of_types(action_class.action_types)

    def between(self, start: int | None = None, end: int | None = None) -> "EventLog":
        mask = np.ones(len(self), bool)
        if start is not None:
            mask &= self.ts >= start
        if end is not None:
            mask &= self.ts < end
        return self.select(mask)

    def for_users(self, user_ids) -> "EventLog":
        return self.select(np.isin(self.user, np.asarray(list(user_ids), np.int64)))

    # persistence

    def write_jsonl(self, fh) -> int:
        for e in self:
            fh.write(json.dumps(event_record(e), sort_keys=True, separators=(",", ":")) + "\n")
        return len(self)

    @classmethod
    def read_jsonl(cls, source, report: RejectReport | None = None) -> "EventLog":
        return cls.from_events(parse_generic_events(source, report))

    def save_npz(self, path) -> None:
        """Write an ``.npz`` archive with fixed zip timestamps (byte-reproducible)."""
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for f in self.__slots__:
                buf = io.BytesIO()
                np.lib.format.write_array(buf, getattr(self, f), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"{f}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())

    @classmethod
    def load_npz(cls, path) -> "EventLog":
        with np.load(path) as data:
            return cls(*(data[f] for f in cls.__slots__), presorted=True)


def day_number(ts) -> np.ndarray:
    """UTC calendar-day index since the epoch."""
    return np.floor_divide(np.asarray(ts, np.int64), DAY)


@dataclass
class DailyCounts:
    """Per-(user, UTC day) action counts in CSR layout over sorted users."""

    users: np.ndarray
    ptr: np.ndarray
    days: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_log(cls, log: EventLog) -> "DailyCounts":
        days = day_number(log.ts)
        key = _key(log.user, days)
        uniq, counts = np.unique(key, return_counts=True)
        u = uniq >> _DAY_BITS
        d = uniq & ((1 << _DAY_BITS) - 1)
        users, starts = np.unique(u, return_index=True)
        ptr = np.append(starts, len(u)).astype(np.int64)
        return cls(users, ptr, d.astype(np.int64), counts.astype(np.int64))

    def _keys(self) -> np.ndarray:
        reps = np.diff(self.ptr)
        return _key(np.repeat(self.users, reps), self.days)

    def for_user(self, user_id: int) -> tuple[np.ndarray, np.ndarray]:
        i = np.searchsorted(self.users, user_id)
        if i >= len(self.users) or self.users[i] != user_id:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        lo, hi = self.ptr[i], self.ptr[i + 1]
        return self.days[lo:hi], self.counts[lo:hi]

    def lookup(self, user_ids, days) -> np.ndarray:
        """Counts at arbitrary (user, day) pairs, 0 where nothing happened."""
        keys = self._keys()
        q = _key(np.asarray(user_ids, np.int64), np.asarray(days, np.int64))
        pos = np.searchsorted(keys, q)
        pos_c = np.minimum(pos, max(len(keys) - 1, 0))
        hit = (pos < len(keys)) & (keys[pos_c] == q) if len(keys) else np.zeros(q.shape, bool)
        out = np.zeros(q.shape, np.int64)
        out[hit] = self.counts[pos_c[hit]]
        return out


def _key(user, day) -> np.ndarray:
    day = np.asarray(day, np.int64)
    if day.size and (day.min() < 0 or day.max() >= 1 << _DAY_BITS):
        raise ValueError("day index outside the supported range")
    return (np.asarray(user, np.int64) << _DAY_BITS) | day
