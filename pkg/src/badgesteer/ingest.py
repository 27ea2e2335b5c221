"""Streaming readers for Stack Exchange dump XML and generic JSON-lines events.

Every reader takes a :class:`RejectReport` and guarantees exact accounting:
``report.emitted + report.rejected == report.rows`` once the stream is drained.
XML is consumed with expat in fixed-size chunks, so memory is bounded by the
chunk size plus the largest row, never by file size.
"""

from __future__ import annotations

import io
import json
import logging
import os
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping
from xml.parsers import expat

from .types import (
    DUMP_CLASS_TO_TIER,
    EDIT_TYPES,
    ActionClass,
    ActionEvent,
    ActionType,
    BadgeAward,
    Tier,
    UserRecord,
    iso,
    parse_timestamp,
)

log = logging.getLogger(__name__)

# PostHistoryTypeId -> edit action. Rollbacks (7/8/9) are deliberately absent.
EDIT_HISTORY_TYPES = {4: ActionType.EditTitle, 5: ActionType.EditBody, 6: ActionType.EditTags}
DEFAULT_EDIT_INCLUDE = (4, 5, 6)

CHUNK_SIZE = 1 << 16
MAX_DETAIL_RECORDS = 10_000

DEFAULT_CLASS_MAP = {
    "Editor": ActionClass.Edit,
    "Strunk & White": ActionClass.Edit,
    "Copy Editor": ActionClass.Edit,
    "Supporter": ActionClass.Vote,
    "Critic": ActionClass.Vote,
    "Civic Duty": ActionClass.Vote,
    "Electorate": ActionClass.Vote,
}


class IngestError(Exception):
    """Fatal, file-level input error."""


@dataclass
class RejectReport:
    """Row accounting for one input file.

    ``skipped`` counts rows dropped by design (filtered types, community users);
    ``malformed`` rows additionally keep a (line, reason) detail record.
    """

    source: str = "<stream>"
    rows: int = 0
    emitted: int = 0
    skipped: Counter = field(default_factory=Counter)
    malformed: Counter = field(default_factory=Counter)
    details: list = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return sum(self.skipped.values()) + sum(self.malformed.values())

    def skip(self, reason: str) -> None:
        self.skipped[reason] += 1

    def reject(self, line: int, reason: str) -> None:
        self.malformed[reason] += 1
        if len(self.details) < MAX_DETAIL_RECORDS:
            self.details.append({"line": line, "reason": reason})

    def balanced(self) -> bool:
        return self.emitted + self.rejected == self.rows

    def summary(self) -> dict:
        return {
            "source": self.source,
            "rows": self.rows,
            "emitted": self.emitted,
            "rejected": self.rejected,
            "skipped": dict(sorted(self.skipped.items())),
            "malformed": dict(sorted(self.malformed.items())),
        }

    def write_jsonl(self, fh: IO[str]) -> None:
        for rec in self.details:
            fh.write(json.dumps({"source": self.source, **rec}, sort_keys=True) + "\n")
        fh.write(json.dumps({"summary": self.summary()}, sort_keys=True) + "\n")


class _Malformed(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _open_binary(source) -> tuple[IO[bytes], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "rb"), True
    if isinstance(source, io.TextIOBase):
        raise TypeError("XML sources must be opened in binary mode")
    return source, False


def _source_name(source) -> str:
    if isinstance(source, (str, os.PathLike)):
        return str(source)
    return getattr(source, "name", "<stream>")


def iter_rows(source, chunk_size: int = CHUNK_SIZE) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, attributes)`` for every ``<row>`` element."""
    fh, owned = _open_binary(source)
    parser = expat.ParserCreate()
    pending: list = []

    def start(name, attrs):
        if name == "row":
            pending.append((parser.CurrentLineNumber, attrs))

    parser.StartElementHandler = start
    try:
        while True:
            chunk = fh.read(chunk_size)
            final = not chunk
            try:
                parser.Parse(chunk, final)
            except expat.ExpatError as exc:
                raise IngestError(
                    f"{_source_name(source)}: XML error: {expat.ErrorString(exc.code)} "
                    f"at line {exc.lineno}, column {exc.offset}"
                ) from None
            if pending:
                yield from pending
                pending.clear()
            if final:
                break
    finally:
        if owned:
            fh.close()


def _int_attr(attrs: Mapping[str, str], name: str, required: bool = True) -> int | None:
    raw = attrs.get(name)
    if raw is None:
        if required:
            raise _Malformed(f"missing_{name}")
        return None
    try:
        return int(raw)
    except ValueError:
        raise _Malformed(f"bad_{name}") from None


_NOW_SLACK = 86400


def _ts_attr(raw: str | None, name: str = "CreationDate") -> int:
    if raw is None:
        raise _Malformed(f"missing_{name}")
    try:
        ts = parse_timestamp(raw)
    except ValueError:
        raise _Malformed(f"bad_{name}") from None
    if ts < 0 or ts > time.time() + _NOW_SLACK:
        raise _Malformed(f"out_of_range_{name}")
    return ts


def parse_post_history(
    source,
    report: RejectReport | None = None,
    include: Iterable[int] = DEFAULT_EDIT_INCLUDE,
    post_owners: Mapping[int, int] | None = None,
) -> Iterator[ActionEvent]:
    """Stream edit events out of a PostHistory.xml dump."""
    report = report if report is not None else RejectReport()
    report.source = _source_name(source)
    include = {int(t) for t in include}
    unknown = include - EDIT_HISTORY_TYPES.keys()
    if unknown:
        raise ValueError(f"PostHistoryTypeId(s) {sorted(unknown)} are not edit types")

    for line, attrs in iter_rows(source):
        report.rows += 1
        try:
            kind = _int_attr(attrs, "PostHistoryTypeId")
            if kind not in include:
                report.skip("filtered_type")
                continue
            user = _int_attr(attrs, "UserId", required=False)
            if user is None:
                report.skip("deleted_user")
                continue
            if user <= 0:
                report.skip("community_user")
                continue
            ts = _ts_attr(attrs.get("CreationDate"))
            post = _int_attr(attrs, "PostId", required=False)
        except _Malformed as exc:
            report.reject(line, exc.reason)
            continue
        own = None
        if post_owners is not None and post is not None and post in post_owners:
            own = post_owners[post] == user
        report.emitted += 1
        yield ActionEvent(
            user_id=user,
            ts=ts,
            action_type=EDIT_HISTORY_TYPES[kind],
            post_id=post,
            comment_len=len(attrs.get("Comment", "")),
            own_post=own,
        )


def parse_posts(source, report: RejectReport | None = None) -> Iterator[ActionEvent]:
    """One ``Post`` event per authored post in Posts.xml."""
    report = report if report is not None else RejectReport()
    report.source = _source_name(source)
    for line, attrs in iter_rows(source):
        report.rows += 1
        try:
            user = _int_attr(attrs, "OwnerUserId", required=False)
            if user is None:
                report.skip("deleted_user")
                continue
            if user <= 0:
                report.skip("community_user")
                continue
            post = _int_attr(attrs, "Id")
            ts = _ts_attr(attrs.get("CreationDate"))
        except _Malformed as exc:
            report.reject(line, exc.reason)
            continue
        report.emitted += 1
        yield ActionEvent(user_id=user, ts=ts, action_type=ActionType.Post, post_id=post)


def post_owner_map(source) -> dict[int, int]:
    return {e.post_id: e.user_id for e in parse_posts(source)}


def parse_users(source, report: RejectReport | None = None) -> Iterator[UserRecord]:
    report = report if report is not None else RejectReport()
    report.source = _source_name(source)
    for line, attrs in iter_rows(source):
        report.rows += 1
        try:
            user = _int_attr(attrs, "Id")
            if user <= 0:
                report.skip("community_user")
                continue
            created = _ts_attr(attrs.get("CreationDate"))
            rep = _int_attr(attrs, "Reputation", required=False)
        except _Malformed as exc:
            report.reject(line, exc.reason)
            continue
        report.emitted += 1
        yield UserRecord(user_id=user, account_created=created, reputation=rep)


def load_class_map(source) -> dict[str, ActionClass]:
    """Read a two-column ``name<TAB>class`` table; ``#`` starts a comment."""
    if isinstance(source, (str, os.PathLike)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    mapping = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            name, _, cls = line.rpartition("\t")
        elif "," in line:
            name, _, cls = line.rpartition(",")
        else:
            raise IngestError(f"class map line {n}: expected two columns, got {raw!r}")
        try:
            mapping[name.strip()] = ActionClass.parse(cls)
        except ValueError as exc:
            raise IngestError(f"class map line {n}: {exc}") from None
    return mapping


def parse_badges(
    source,
    class_map: Mapping[str, ActionClass] | None = None,
    report: RejectReport | None = None,
) -> Iterator[BadgeAward]:
    """Badge awards from Badges.xml, deduplicated per (user, name) keeping the earliest.

    The deduplication needs the whole file, so awards are yielded sorted by
    (user_id, ts, badge_name) after the pass.
    """
    report = report if report is not None else RejectReport()
    report.source = _source_name(source)
    class_map = DEFAULT_CLASS_MAP if class_map is None else class_map
    earliest: dict = {}
    for line, attrs in iter_rows(source):
        report.rows += 1
        try:
            user = _int_attr(attrs, "UserId")
            if user <= 0:
                report.skip("community_user")
                continue
            name = attrs.get("Name")
            if not name:
                raise _Malformed("missing_Name")
            code = _int_attr(attrs, "Class")
            if code not in DUMP_CLASS_TO_TIER:
                raise _Malformed("unknown_Class")
            ts = _ts_attr(attrs.get("Date"), "Date")
        except _Malformed as exc:
            report.reject(line, exc.reason)
            continue
        award = BadgeAward(
            user_id=user,
            ts=ts,
            badge_name=name,
            tier=DUMP_CLASS_TO_TIER[code],
            action_class=class_map.get(name, ActionClass.Other),
        )
        key = (user, name)
        prev = earliest.get(key)
        if prev is not None:
            report.skip("duplicate")
        if prev is None or award.ts < prev.ts:
            earliest[key] = award
    report.emitted = len(earliest)
    yield from sorted(earliest.values(), key=lambda a: (a.user_id, a.ts, a.badge_name))


def _jsonl_records(source, report: RejectReport) -> Iterator[tuple[int, dict]]:
    owned = isinstance(source, (str, os.PathLike))
    fh = open(source, "r", encoding="utf-8") if owned else source
    report.source = _source_name(source)
    try:
        for n, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            report.rows += 1
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError:
                report.reject(n, "invalid_json")
                continue
            if not isinstance(rec, dict):
                report.reject(n, "not_an_object")
                continue
            yield n, rec
    finally:
        if owned:
            fh.close()


def _json_int(rec: dict, name: str, required: bool = True) -> int | None:
    value = rec.get(name)
    if value is None:
        if required:
            raise _Malformed(f"missing_{name}")
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise _Malformed(f"bad_{name}")
    return value


def _json_ts(rec: dict, name: str = "ts") -> int:
    value = rec.get(name)
    if not isinstance(value, str):
        raise _Malformed(f"missing_{name}" if value is None else f"bad_{name}")
    return _ts_attr(value, name)


def parse_generic_events(source, report: RejectReport | None = None) -> Iterator[ActionEvent]:
    """Events from a JSON-lines file: ``user_id``, ``ts`` (ISO-8601), ``action_type``."""
    report = report if report is not None else RejectReport()
    for n, rec in _jsonl_records(source, report):
        try:
            user = _json_int(rec, "user_id")
            if user < 0:
                raise _Malformed("bad_user_id")
            ts = _json_ts(rec)
            kind = rec.get("action_type")
            if not isinstance(kind, str):
                raise _Malformed("missing_action_type")
            action = ActionType.parse(kind)
            post = _json_int(rec, "post_id", required=False)
            clen = _json_int(rec, "comment_len", required=False)
            if clen is not None and clen < 0:
                raise _Malformed("bad_comment_len")
            own = rec.get("own_post")
            if own is not None and not isinstance(own, bool):
                raise _Malformed("bad_own_post")
        except _Malformed as exc:
            report.reject(n, exc.reason)
            continue
        if action in EDIT_TYPES and clen is None:
            clen = 0
        report.emitted += 1
        yield ActionEvent(user, ts, action, post, clen, own)


def parse_generic_badges(source, report: RejectReport | None = None) -> Iterator[BadgeAward]:
    """Badge awards from JSON lines: ``user_id, badge_name, tier, action_class, ts``."""
    report = report if report is not None else RejectReport()
    for n, rec in _jsonl_records(source, report):
        try:
            user = _json_int(rec, "user_id")
            name = rec.get("badge_name")
            if not isinstance(name, str) or not name:
                raise _Malformed("missing_badge_name")
            tier = Tier.__members__.get(str(rec.get("tier")))
            if tier is None:
                raise _Malformed("bad_tier")
            try:
                cls = ActionClass.parse(str(rec.get("action_class", "Other")))
            except ValueError:
                raise _Malformed("bad_action_class") from None
            ts = _json_ts(rec)
        except _Malformed as exc:
            report.reject(n, exc.reason)
            continue
        report.emitted += 1
        yield BadgeAward(user, ts, name, tier, cls)


def event_record(e: ActionEvent) -> dict:
    rec = {"user_id": e.user_id, "ts": iso(e.ts), "action_type": e.action_type.name}
    if e.post_id is not None:
        rec["post_id"] = e.post_id
    if e.comment_len is not None:
        rec["comment_len"] = e.comment_len
    if e.own_post is not None:
        rec["own_post"] = e.own_post
    return rec


def badge_record(a: BadgeAward) -> dict:
    return {
        "user_id": a.user_id,
        "badge_name": a.badge_name,
        "tier": a.tier.name,
        "action_class": a.action_class.value,
        "ts": iso(a.ts),
    }


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def write_events_jsonl(events: Iterable[ActionEvent], fh: IO[str]) -> int:
    n = 0
    for e in events:
        fh.write(_dump(event_record(e)) + "\n")
        n += 1
    return n


def write_badges_jsonl(awards: Iterable[BadgeAward], fh: IO[str]) -> int:
    n = 0
    for a in sorted(awards, key=lambda a: (a.user_id, a.ts, a.badge_name)):
        fh.write(_dump(badge_record(a)) + "\n")
        n += 1
    return n


def write_users_jsonl(users: Iterable[UserRecord], fh: IO[str]) -> int:
    n = 0
    for u in sorted(users, key=lambda u: u.user_id):
        rec = {"user_id": u.user_id, "account_created": iso(u.account_created)}
        if u.reputation is not None:
            rec["reputation"] = u.reputation
        fh.write(_dump(rec) + "\n")
        n += 1
    return n


def read_users_jsonl(source) -> list[UserRecord]:
    report = RejectReport()
    out = []
    for n, rec in _jsonl_records(source, report):
        out.append(
            UserRecord(
                int(rec["user_id"]),
                parse_timestamp(rec["account_created"]),
                rec.get("reputation"),
            )
        )
    return out
