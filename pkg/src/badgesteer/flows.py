"""Lifecycle segments, group transition matrices, badge co-occurrence and badge order."""

from __future__ import annotations

import csv
import enum
import json
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .cluster import ActivityGroupModel
from .metrics import ActivityProfile, Window, profile_from_timestamps
from .types import ActionClass, BadgeAward, Group, Tier


class Segment(str, enum.Enum):
    PreSilver = "PreSilver"
    SilverToGold = "SilverToGold"
    PostSilver = "PostSilver"
    PostGold = "PostGold"


class SegmentError(ValueError):
    """Badge data inconsistent with a lifecycle (e.g. gold before silver)."""


@dataclass(frozen=True)
class LifecycleSegments:
    user_id: int
    segments: tuple  # ((Segment, Window), ...)

    def labels(self) -> tuple:
        return tuple(s for s, _ in self.segments)

    def window(self, label: Segment) -> Window | None:
        for s, w in self.segments:
            if s is label:
                return w
        return None


def tier_awards(awards: Iterable[BadgeAward], action_class: ActionClass) -> dict[Tier, BadgeAward]:
    """Earliest award per tier of one action class."""
    out: dict = {}
    for a in awards:
        if a.action_class == action_class and (a.tier not in out or a.ts < out[a.tier].ts):
            out[a.tier] = a
    return out


def segment(
    user: int,
    awards: Iterable[BadgeAward],
    first_ts: int,
    last_ts: int,
    action_class: ActionClass = ActionClass.Edit,
) -> LifecycleSegments:
    """Split ``[first_ts, last_ts]`` at the silver and gold award instants."""
    by_tier = tier_awards((a for a in awards if a.user_id == user), action_class)
    silver = by_tier.get(Tier.Silver)
    gold = by_tier.get(Tier.Gold)
    if silver is None:
        raise SegmentError(f"user {user} holds no silver {action_class.value} badge")
    if gold is not None and gold.ts < silver.ts:
        raise SegmentError(f"user {user}: gold awarded before silver")
    start = min(first_ts, silver.ts)
    cuts = [silver.ts] + ([gold.ts] if gold is not None else [])
    end = max(last_ts + 1, cuts[-1])
    bounds = [start, *cuts, end]
    labels = (
        [Segment.PreSilver, Segment.SilverToGold, Segment.PostGold]
        if gold is not None
        else [Segment.PreSilver, Segment.PostSilver]
    )
    return LifecycleSegments(
        user,
        tuple((lab, Window(lo, hi)) for lab, lo, hi in zip(labels, bounds[:-1], bounds[1:])),
    )


def segment_profiles(
    segs: LifecycleSegments, qualifying_ts, **profile_kw
) -> dict[Segment, ActivityProfile]:
    """Activity profile per segment; silent or empty segments give a zero profile."""
    out = {}
    for label, w in segs.segments:
        if w.empty:
            out[label] = ActivityProfile(segs.user_id, w, 0.0, 0.0)
        else:
            out[label] = profile_from_timestamps(segs.user_id, w, qualifying_ts, **profile_kw)
    return out


@dataclass
class TransitionMatrix:
    from_segment: Segment
    to_segment: Segment
    counts: np.ndarray  # from-group x to-group

    @property
    def proportions(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, self.counts / np.maximum(rows, 1), 0.0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def transitions(
    population: Mapping[int, Mapping[Segment, ActivityProfile]],
    seg_a: Segment,
    seg_b: Segment,
    model: ActivityGroupModel,
) -> TransitionMatrix:
    """Cross-tabulate group in ``seg_a`` against group in ``seg_b``.

    Users lacking either segment are not part of this flow and are skipped.
    """
    k = model.n_clusters
    counts = np.zeros((k, k), np.int64)
    pairs = [(p[seg_a], p[seg_b]) for p in population.values() if seg_a in p and seg_b in p]
    if pairs:
        X = np.array([[a.consistency, a.intensity, b.consistency, b.intensity] for a, b in pairs])
        ga = model.predict(X[:, :2])
        gb = model.predict(X[:, 2:])
        np.add.at(counts, (ga, gb), 1)
    return TransitionMatrix(seg_a, seg_b, counts)


def group_names(k: int) -> list[str]:
    return [g.name for g in Group] if k == 3 else [str(j) for j in range(k)]


def sankey(matrices: Sequence[TransitionMatrix]) -> dict:
    """Plot-ready nodes/links for a chain of transition matrices."""
    nodes, index = [], {}

    def node(seg: Segment, g: str) -> int:
        key = (seg.value, g)
        if key not in index:
            index[key] = len(nodes)
            nodes.append({"name": f"{seg.value}:{g}", "segment": seg.value, "group": g})
        return index[key]

    links = []
    for m in matrices:
        names = group_names(m.counts.shape[0])
        for i, gi in enumerate(names):
            node(m.from_segment, gi)
        for j, gj in enumerate(names):
            node(m.to_segment, gj)
        for i, gi in enumerate(names):
            for j, gj in enumerate(names):
                if m.counts[i, j]:
                    links.append({
                        "source": index[(m.from_segment.value, gi)],
                        "target": index[(m.to_segment.value, gj)],
                        "value": int(m.counts[i, j]),
                    })
    return {"nodes": nodes, "links": links}


def write_transitions_csv(matrices: Sequence[TransitionMatrix], fh: IO[str], schema_comment: str | None = None):
    if schema_comment:
        fh.write(schema_comment + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["from_segment", "to_segment", "from_group", "to_group", "count", "proportion"])
    for m in matrices:
        names = group_names(m.counts.shape[0])
        props = m.proportions
        for i, gi in enumerate(names):
            for j, gj in enumerate(names):
                w.writerow([m.from_segment.value, m.to_segment.value, gi, gj, int(m.counts[i, j]),
                            f"{props[i, j]:.6f}"])


# co-occurrence -------------------------------------------------------------

LEVELS = ("none", "silver", "gold")


def highest_tiers(awards: Iterable[BadgeAward], action_class: ActionClass) -> dict[int, Tier]:
    out: dict = {}
    for a in awards:
        if a.action_class == action_class and a.tier >= Tier.Silver:
            out[a.user_id] = max(out.get(a.user_id, a.tier), a.tier)
    return out


@dataclass
class CooccurrenceTable:
    row_class: ActionClass
    col_class: ActionClass
    counts: np.ndarray  # rows/cols indexed by LEVELS

    def share_of_cols_with_row(self) -> float:
        """Fraction of column-class silver-or-better holders who also hold row-class silver-or-better."""
        held = self.counts[:, 1:]
        return float(held[1:].sum() / held.sum()) if held.sum() else 0.0

    def share_of_rows_with_col(self) -> float:
        held = self.counts[1:, :]
        return float(held[:, 1:].sum() / held.sum()) if held.sum() else 0.0


def cooccurrence(
    awards: Iterable[BadgeAward],
    row_class: ActionClass = ActionClass.Vote,
    col_class: ActionClass = ActionClass.Edit,
    users: Iterable[int] | None = None,
) -> CooccurrenceTable:
    """Users by highest (none/silver/gold) tier in two action classes.

    The (none, none) cell is only meaningful when the full ``users`` universe is given.
    """
    awards = list(awards)
    rows = highest_tiers(awards, row_class)
    cols = highest_tiers(awards, col_class)
    level = {Tier.Silver: 1, Tier.Gold: 2}
    counts = np.zeros((3, 3), np.int64)
    universe = set(rows) | set(cols)
    if users is not None:
        universe |= set(users)
    for u in universe:
        counts[level.get(rows.get(u), 0), level.get(cols.get(u), 0)] += 1
    if users is None:
        counts[0, 0] = 0
    return CooccurrenceTable(row_class, col_class, counts)


def write_cooccurrence_csv(t: CooccurrenceTable, fh: IO[str], schema_comment: str | None = None):
    if schema_comment:
        fh.write(schema_comment + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"{t.row_class.value.lower()}\\{t.col_class.value.lower()}", *LEVELS])
    for i, lvl in enumerate(LEVELS):
        w.writerow([lvl, *(int(c) for c in t.counts[i])])
    w.writerow([f"share_{t.col_class.value.lower()}_holders_with_{t.row_class.value.lower()}",
                f"{t.share_of_cols_with_row():.6f}"])
    w.writerow([f"share_{t.row_class.value.lower()}_holders_with_{t.col_class.value.lower()}",
                f"{t.share_of_rows_with_col():.6f}"])


# badge order ---------------------------------------------------------------

_CLASS_ORDER = {ActionClass.Vote: 0, ActionClass.Edit: 1}
PATH_BADGES = {
    (Tier.Silver, ActionClass.Vote): "silver-vote",
    (Tier.Silver, ActionClass.Edit): "silver-edit",
    (Tier.Gold, ActionClass.Vote): "gold-vote",
    (Tier.Gold, ActionClass.Edit): "gold-edit",
}


@dataclass(frozen=True)
class BadgePath:
    steps: tuple
    count: int
    tied: int = 0  # users whose order needed the tie-break rule


@dataclass
class PathReport:
    paths: list
    anomalies: dict  # user -> reason


def user_path(awards: Iterable[BadgeAward]) -> tuple[tuple, bool]:
    """Chronological order of the four tracked badges; equal instants go
    silver before gold, then vote before edit."""
    first: dict = {}
    for a in awards:
        key = (a.tier, a.action_class)
        if key in PATH_BADGES and (key not in first or a.ts < first[key].ts):
            first[key] = a
    items = sorted(first.items(), key=lambda kv: (kv[1].ts, kv[0][0], _CLASS_ORDER[kv[0][1]]))
    stamps = [a.ts for _, a in items]
    return tuple(PATH_BADGES[k] for k, _ in items), len(set(stamps)) < len(stamps)


def path_is_valid(steps: Sequence[str]) -> bool:
    for cls in ("vote", "edit"):
        s, g = f"silver-{cls}", f"gold-{cls}"
        if g in steps and (s not in steps or steps.index(s) > steps.index(g)):
            return False
    return True


def badge_paths(awards: Iterable[BadgeAward]) -> PathReport:
    by_user: dict = {}
    for a in awards:
        by_user.setdefault(a.user_id, []).append(a)
    counts: Counter = Counter()
    tied: Counter = Counter()
    anomalies = {}
    for uid in sorted(by_user):
        steps, was_tied = user_path(by_user[uid])
        if len(steps) < 2:
            continue
        if not path_is_valid(steps):
            anomalies[uid] = "gold before silver"
            continue
        counts[steps] += 1
        tied[steps] += was_tied
    paths = [BadgePath(p, c, tied[p]) for p, c in counts.items()]
    paths.sort(key=lambda bp: (-bp.count, bp.steps))
    return PathReport(paths, anomalies)


def write_paths_csv(report: PathReport, fh: IO[str], schema_comment: str | None = None):
    if schema_comment:
        fh.write(schema_comment + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path", "count", "share", "tied"])
    total = sum(p.count for p in report.paths)
    for p in report.paths:
        w.writerow([" > ".join(p.steps), p.count, f"{p.count / total:.6f}", p.tied])


def write_sankey_json(matrices: Sequence[TransitionMatrix], fh: IO[str]) -> None:
    json.dump(sankey(matrices), fh, indent=1, sort_keys=True)
    fh.write("\n")


def lifecycle_population(log, awards: Iterable[BadgeAward], action_class: ActionClass = ActionClass.Edit):
    """Segment profiles for every silver holder of ``action_class``.

    Returns ``(population, rejected)`` where rejected maps users to the reason.
    """
    by_user: dict = {}
    for a in awards:
        if a.action_class == action_class:
            by_user.setdefault(a.user_id, []).append(a)
    per_user = log.of_class(action_class).split_by_user()
    population, rejected = {}, {}
    for uid in sorted(by_user):
        tiers = tier_awards(by_user[uid], action_class)
        if Tier.Silver not in tiers:
            continue
        ev = per_user.get(uid)
        ts = ev.ts if ev is not None else np.zeros(0, np.int64)
        silver = tiers[Tier.Silver].ts
        first = int(ts[0]) if ts.size else silver
        last = int(ts[-1]) if ts.size else silver
        try:
            segs = segment(uid, by_user[uid], first, last, action_class)
        except SegmentError as exc:
            rejected[uid] = str(exc)
            continue
        population[uid] = segment_profiles(segs, ts)
    return population, rejected
