"""Badge-centred activity curves and per-offset group comparisons."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .eventlog import DailyCounts, EventLog, day_number
from .stats import AnovaResult, format_pvalue, one_way_anova
from .types import BadgeAward, BadgeSpec, Group

DEFAULT_WINDOW = 60
ALL = "All"


class Aggregator(str, enum.Enum):
    Median = "median"
    Mean = "mean"


class CenteringMode(str, enum.Enum):
    BadgeAward = "badge"
    CumulativeThreshold = "threshold"


@dataclass(frozen=True)
class CenteringRule:
    mode: CenteringMode = CenteringMode.BadgeAward
    offset: int = 0
    spec: BadgeSpec | None = None

    def __post_init__(self):
        if self.mode is CenteringMode.CumulativeThreshold:
            if self.spec is None:
                raise ValueError("threshold centering needs a badge spec")
            if self.spec.threshold + self.offset <= 0:
                raise ValueError("threshold + offset must stay positive")

    @property
    def target(self) -> int | None:
        if self.mode is CenteringMode.CumulativeThreshold:
            return self.spec.threshold + self.offset
        return None


def threshold_day(qualifying_ts, target: int) -> int | None:
    """UTC day on which the cumulative qualifying count first reaches ``target``."""
    ts = np.sort(np.asarray(qualifying_ts, np.int64))
    if target <= 0 or ts.size < target:
        return None
    return int(day_number(ts[target - 1]))


def day_zero(
    user: int,
    rule: CenteringRule,
    award: BadgeAward | None = None,
    qualifying_ts=None,
) -> int | None:
    """Centering day for one user, or ``None`` when the user never crosses."""
    if rule.mode is CenteringMode.BadgeAward:
        if award is None or award.user_id != user:
            return None
        return int(day_number(award.ts))
    return threshold_day(qualifying_ts if qualifying_ts is not None else [], rule.target)


def day_zeros(
    log: EventLog,
    rule: CenteringRule,
    awards: Mapping[int, BadgeAward] | None = None,
) -> dict[int, int]:
    """Day zero for every user that has one. ``log`` holds qualifying actions only."""
    out: dict[int, int] = {}
    if rule.mode is CenteringMode.BadgeAward:
        for uid, award in (awards or {}).items():
            out[int(uid)] = int(day_number(award.ts))
        return out
    target = rule.target
    if not len(log):
        return out
    # per-user cumulative index, vectorised over the sorted log
    cuts = np.flatnonzero(np.diff(log.user)) + 1
    starts = np.concatenate([[0], cuts])
    ends = np.concatenate([cuts, [len(log)]])
    enough = (ends - starts) >= target
    idx = starts[enough] + target - 1
    for uid, ts in zip(log.user[idx], log.ts[idx]):
        out[int(uid)] = int(ts // 86400)
    return out


@dataclass
class SteeringCurve:
    group: str
    aggregator: Aggregator
    offsets: np.ndarray
    values: np.ndarray
    n: np.ndarray

    def peak(self) -> tuple[int, float]:
        i = int(np.argmax(self.values))
        return int(self.offsets[i]), float(self.values[i])

    def at(self, offset: int) -> float:
        return float(self.values[int(np.searchsorted(self.offsets, offset))])


@dataclass
class CurveSet:
    offsets: np.ndarray
    curves: dict = field(default_factory=dict)  # group name -> SteeringCurve
    matrix: np.ndarray | None = None  # users x offsets day counts
    users: np.ndarray | None = None
    groups: np.ndarray | None = None


def _aggregate(block: np.ndarray, aggregator: Aggregator, drop_zeros: bool):
    if drop_zeros:
        values = np.empty(block.shape[1])
        n = np.empty(block.shape[1], np.int64)
        for j in range(block.shape[1]):
            col = block[:, j]
            col = col[col > 0]
            n[j] = col.size
            values[j] = (np.median(col) if aggregator is Aggregator.Median else col.mean()) if col.size else np.nan
        return values, n
    n = np.full(block.shape[1], block.shape[0], np.int64)
    if aggregator is Aggregator.Median:
        return np.median(block, axis=0), n
    return block.mean(axis=0), n


def offset_matrix(daily: DailyCounts, zeros: Mapping[int, int], window: int = DEFAULT_WINDOW):
    """(users, offsets, counts) with counts[u, j] = actions on day_zero[u] + offsets[j]."""
    users = np.array(sorted(zeros), dtype=np.int64)
    offsets = np.arange(-window, window + 1)
    if users.size == 0:
        return users, offsets, np.zeros((0, offsets.size), np.int64)
    d0 = np.array([zeros[int(u)] for u in users], np.int64)
    uu = np.repeat(users, offsets.size)
    dd = (d0[:, None] + offsets[None, :]).ravel()
    counts = daily.lookup(uu, dd).reshape(users.size, offsets.size)
    return users, offsets, counts


def curves(
    daily: DailyCounts,
    zeros: Mapping[int, int],
    groups: Mapping[int, Group] | None = None,
    aggregator: Aggregator | str = Aggregator.Median,
    window: int = DEFAULT_WINDOW,
    drop_zeros: bool = False,
) -> CurveSet:
    """Per-group curves of the day-count statistic around day zero.

    ``daily`` counts qualifying actions; users missing from ``zeros`` never
    crossed and are ignored. Users active on no given day contribute zeros.
    """
    aggregator = Aggregator(aggregator)
    users, offsets, counts = offset_matrix(daily, zeros, window)
    out = CurveSet(offsets=offsets, matrix=counts, users=users)
    if users.size == 0:
        return out
    vals, n = _aggregate(counts, aggregator, drop_zeros)
    out.curves[ALL] = SteeringCurve(ALL, aggregator, offsets, vals, n)
    if groups is not None:
        g = np.array([int(groups.get(int(u), -1)) for u in users])
        out.groups = g
        for label in Group:
            sel = g == int(label)
            if sel.any():
                vals, n = _aggregate(counts[sel], aggregator, drop_zeros)
                out.curves[label.name] = SteeringCurve(label.name, aggregator, offsets, vals, n)
    return out


def curve(
    log: EventLog,
    rule: CenteringRule,
    awards: Mapping[int, BadgeAward] | None = None,
    groups: Mapping[int, Group] | None = None,
    aggregator: Aggregator | str = Aggregator.Median,
    window: int = DEFAULT_WINDOW,
    drop_zeros: bool = False,
) -> CurveSet:
    """Curves straight from a log of qualifying actions."""
    zeros = day_zeros(log, rule, awards)
    if rule.mode is CenteringMode.BadgeAward and awards is not None:
        present = set(np.unique(log.user).tolist())
        zeros = {u: d for u, d in zeros.items() if u in present}
    return curves(DailyCounts.from_log(log), zeros, groups, aggregator, window, drop_zeros)


@dataclass
class OffsetTest:
    offset: int
    result: AnovaResult | None
    sizes: tuple
    error: str | None = None

    def record(self) -> dict:
        rec = {"offset": self.offset, "group_sizes": list(self.sizes)}
        if self.result is None:
            rec["error"] = self.error
        else:
            rec.update(
                F=self.result.statistic,
                p=self.result.pvalue,
                p_display=format_pvalue(self.result.pvalue),
                df_between=self.result.df_between,
                df_within=self.result.df_within,
            )
        return rec


def group_anova(cs: CurveSet, offsets: Iterable[int] | None = None) -> list[OffsetTest]:
    """One-way ANOVA across groups of the per-user counts at each offset."""
    if cs.groups is None:
        raise ValueError("curve set carries no group assignment")
    offsets = cs.offsets if offsets is None else offsets
    out = []
    labels = [int(g) for g in Group if (cs.groups == int(g)).any()]
    for o in offsets:
        j = int(np.searchsorted(cs.offsets, o))
        samples = [cs.matrix[cs.groups == g, j] for g in labels]
        sizes = tuple(int(s.size) for s in samples)
        try:
            out.append(OffsetTest(int(o), one_way_anova(samples), sizes))
        except ValueError as exc:
            out.append(OffsetTest(int(o), None, sizes, str(exc)))
    return out


def write_curves_csv(cs: CurveSet, fh: IO[str], schema_comment: str | None = None) -> None:
    if schema_comment:
        fh.write(schema_comment + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["group", "aggregator", "offset", "statistic", "n"])
    for name, c in cs.curves.items():
        for o, v, n in zip(c.offsets, c.values, c.n):
            w.writerow([name, c.aggregator.value, int(o), repr(float(v)), int(n)])


def write_anova_jsonl(tests: Sequence[OffsetTest], fh: IO[str]) -> None:
    for t in tests:
        fh.write(json.dumps(t.record(), sort_keys=True) + "\n")
