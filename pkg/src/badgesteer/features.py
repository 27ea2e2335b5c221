"""User, edit and temporal feature blocks for the post-badge decline task.

Every value is computed from events and awards strictly before day zero.
The column layout is fixed by ``FEATURE_MANIFEST``; ``BLOCKS`` gives the
column indices of each family (U: 10, E: 9, T: 40).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .cluster import ActivityGroupModel
from .eventlog import EventLog, day_number
from .flows import SegmentError, segment, segment_profiles, tier_awards, Segment
from .metrics import ActivityProfile, Window, lower_median, profile_from_timestamps
from .types import DAY, EDIT_TYPES, ActionClass, ActionType, BadgeAward, Group, Tier, UserRecord

HISTORY_SLOTS = 12
AGG_WEEKS = (3, 5, 10)

USER_FEATURES = [
    ("account_age_days", "UTC days from account creation to day zero (tenure when unknown)"),
    ("days_since_first_action", "UTC days from the first recorded action to day zero"),
    ("prior_badge_total", "badges of any kind awarded before day zero"),
    ("prior_gold", "gold badges awarded before day zero"),
    ("prior_silver", "silver badges awarded before day zero"),
    ("prior_bronze", "bronze badges awarded before day zero"),
    ("distinct_prior_badge_names", "distinct badge names awarded before day zero"),
    ("posts_authored", "posts authored before day zero"),
    ("total_actions_all_types", "actions of every type before day zero"),
    ("distinct_active_days", "distinct UTC days with any action before day zero"),
]

EDIT_FEATURES = [
    ("edit_ratio", "edit actions / all actions"),
    ("title_frac", "share of edits that change the title"),
    ("body_frac", "share of edits that change the body"),
    ("tags_frac", "share of edits that change the tags"),
    ("mean_comment_len", "mean edit-comment length in characters"),
    ("median_comment_len", "lower median edit-comment length in characters"),
    ("nonempty_comment_frac", "share of edits with a non-empty comment"),
    ("mean_edits_per_edited_post", "edits per distinct edited post"),
    ("own_post_edit_frac", "share of edits (with known owner) that target the editor's own post"),
]


def _temporal_names():
    out = []
    for measure in ("consistency", "intensity"):
        for side in ("first", "last"):
            for k in AGG_WEEKS:
                out.append((f"{side}{k}w_mean_{measure}", f"mean weekly {measure} over the {side} {k} weeks"))
    for g in Group:
        out.append((f"pre_group_{g.name.lower()}", f"pre-badge activity group is {g.name}"))
    for measure in ("consistency", "intensity"):
        for j in range(HISTORY_SLOTS, 0, -1):
            out.append((f"{measure}_week_minus{j}", f"weekly {measure} {j} week(s) before day zero, 0-padded"))
    out.append(("n_weeks", "weeks in the pre-badge active span"))
    return out


TEMPORAL_FEATURES = _temporal_names()
FEATURE_MANIFEST = USER_FEATURES + EDIT_FEATURES + TEMPORAL_FEATURES
FEATURE_NAMES = [n for n, _ in FEATURE_MANIFEST]
BLOCKS = {
    "U": list(range(0, 10)),
    "E": list(range(10, 19)),
    "T": list(range(19, 59)),
}

assert len(USER_FEATURES) == 10 and len(EDIT_FEATURES) == 9 and len(TEMPORAL_FEATURES) == 40


def _before(log: EventLog, day_zero: int) -> EventLog:
    return log.between(None, day_zero)


def user_features(
    log: EventLog,
    awards: Iterable[BadgeAward],
    day_zero: int,
    record: UserRecord | None = None,
) -> np.ndarray:
    """The 10 user-block values for one user's events and awards."""
    ev = _before(log, day_zero)
    prior = [a for a in awards if a.ts < day_zero]
    d0 = int(day_number(day_zero))
    first_day = int(day_number(ev.ts[0])) if len(ev) else d0
    tenure = d0 - first_day
    age = d0 - int(day_number(record.account_created)) if record is not None else tenure
    tiers = [a.tier for a in prior]
    return np.array([
        age,
        tenure,
        len(prior),
        tiers.count(Tier.Gold),
        tiers.count(Tier.Silver),
        tiers.count(Tier.Bronze),
        len({a.badge_name for a in prior}),
        int((ev.action == ActionType.Post).sum()),
        len(ev),
        np.unique(day_number(ev.ts)).size,
    ], dtype=float)


def edit_features(log: EventLog, day_zero: int) -> np.ndarray:
    """The 9 edit-block values; all zero when there are no prior edits."""
    ev = _before(log, day_zero)
    edits = ev.of_types(EDIT_TYPES)
    n = len(edits)
    if n == 0:
        return np.zeros(len(EDIT_FEATURES))
    clen = np.where(edits.clen < 0, 0, edits.clen)
    posts = edits.post[edits.post >= 0]
    known = edits.own >= 0
    return np.array([
        n / len(ev),
        float((edits.action == ActionType.EditTitle).mean()),
        float((edits.action == ActionType.EditBody).mean()),
        float((edits.action == ActionType.EditTags).mean()),
        float(clen.mean()),
        lower_median(clen),
        float((clen > 0).mean()),
        posts.size / np.unique(posts).size if posts.size else 0.0,
        float((edits.own[known] == 1).mean()) if known.any() else 0.0,
    ])


def pre_badge_profile(log: EventLog, day_zero: int, action_class: ActionClass) -> ActivityProfile:
    q = _before(log, day_zero).of_class(action_class)
    user = int(log.user[0]) if len(log) else -1
    if not len(q):
        return ActivityProfile(user, Window(day_zero, day_zero), 0.0, 0.0)
    return profile_from_timestamps(user, Window(int(q.ts[0]), day_zero), q.ts)


def _left_pad(values: Sequence[float], width: int) -> list:
    tail = list(values)[-width:]
    return [0.0] * (width - len(tail)) + [float(v) for v in tail]


def temporal_features(prof: ActivityProfile, model: ActivityGroupModel | None = None) -> np.ndarray:
    """The 40 temporal-block values from the pre-badge profile."""
    c, i = list(prof.weekly_consistency), list(prof.weekly_intensity)
    aggs = []
    for seq in (c, i):
        for take in (lambda s, k: s[:k], lambda s, k: s[-k:]):
            for k in AGG_WEEKS:
                part = take(seq, k)
                aggs.append(float(np.mean(part)) if part else 0.0)
    onehot = [0.0, 0.0, 0.0]
    if model is not None:
        onehot[int(model.group_of(prof))] = 1.0
    return np.array(aggs + onehot + _left_pad(c, HISTORY_SLOTS) + _left_pad(i, HISTORY_SLOTS) + [prof.n_weeks])


def decline_label(pre_group, post_group) -> bool:
    return int(post_group) < int(pre_group)


def label(model: ActivityGroupModel, pre: ActivityProfile, post: ActivityProfile) -> bool:
    return decline_label(model.group_of(pre), model.group_of(post))


def feature_vector(
    log: EventLog,
    awards: Sequence[BadgeAward],
    day_zero: int,
    action_class: ActionClass,
    model: ActivityGroupModel | None,
    record: UserRecord | None = None,
) -> np.ndarray:
    prof = pre_badge_profile(log, day_zero, action_class)
    return np.concatenate([
        user_features(log, awards, day_zero, record),
        edit_features(log, day_zero),
        temporal_features(prof, model),
    ])


@dataclass
class FeatureMatrix:
    user_ids: np.ndarray
    X: np.ndarray
    y: np.ndarray
    pre_groups: np.ndarray
    post_groups: np.ndarray
    rejected: dict

    def block(self, *names: str) -> np.ndarray:
        return self.X[:, np.concatenate([BLOCKS[n] for n in names])]


def build_feature_matrix(
    log: EventLog,
    awards: Iterable[BadgeAward],
    model: ActivityGroupModel,
    action_class: ActionClass = ActionClass.Edit,
    users: Mapping[int, UserRecord] | None = None,
) -> FeatureMatrix:
    """Features and decline labels for every silver holder of ``action_class``.

    The post segment runs from the silver award to the gold award (or the last action).
    """
    by_user: dict = {}
    for a in awards:
        by_user.setdefault(a.user_id, []).append(a)
    per_user = log.split_by_user()
    ids, rows, labels, pre_g, post_g = [], [], [], [], []
    rejected = {}
    for uid in sorted(by_user):
        tiers = tier_awards(by_user[uid], action_class)
        if Tier.Silver not in tiers:
            continue
        ev = per_user.get(uid, EventLog.empty())
        q = ev.of_class(action_class)
        silver = tiers[Tier.Silver].ts
        first = int(q.ts[0]) if len(q) else silver
        last = int(q.ts[-1]) if len(q) else silver
        try:
            segs = segment(uid, by_user[uid], first, last, action_class)
        except SegmentError as exc:
            rejected[uid] = str(exc)
            continue
        profs = segment_profiles(segs, q.ts)
        post_seg = Segment.SilverToGold if Segment.SilverToGold in profs else Segment.PostSilver
        g_pre = model.group_of(profs[Segment.PreSilver])
        g_post = model.group_of(profs[post_seg])
        rec = users.get(uid) if users else None
        ids.append(uid)
        rows.append(feature_vector(ev, by_user[uid], silver, action_class, model, rec))
        labels.append(decline_label(g_pre, g_post))
        pre_g.append(int(g_pre))
        post_g.append(int(g_post))
    X = np.vstack(rows) if rows else np.zeros((0, len(FEATURE_NAMES)))
    return FeatureMatrix(
        np.asarray(ids, np.int64), X, np.asarray(labels, np.int64),
        np.asarray(pre_g, np.int64), np.asarray(post_g, np.int64), rejected,
    )


def write_features_csv(fm: FeatureMatrix, fh: IO[str], schema_comment: str | None = None) -> None:
    if schema_comment:
        fh.write(schema_comment + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["user_id", *FEATURE_NAMES, "label"])
    for uid, row, lab in zip(fm.user_ids, fm.X, fm.y):
        w.writerow([int(uid), *(repr(float(v)) for v in row), int(lab)])


def read_features_csv(fh: IO[str]) -> FeatureMatrix:
    lines = [l for l in fh if not l.startswith("#")]
    r = csv.reader(lines)
    header = next(r)
    if header[1:-1] != FEATURE_NAMES:
        raise ValueError("feature CSV header does not match the manifest")
    ids, X, y = [], [], []
    for row in r:
        ids.append(int(row[0]))
        X.append([float(v) for v in row[1:-1]])
        y.append(int(row[-1]))
    n = len(ids)
    return FeatureMatrix(
        np.asarray(ids, np.int64), np.asarray(X, float).reshape(n, len(FEATURE_NAMES)),
        np.asarray(y, np.int64), np.zeros(n, np.int64), np.zeros(n, np.int64), {},
    )


def write_manifest(fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", "block", "name", "definition"])
    block_of = {i: b for b, cols in BLOCKS.items() for i in cols}
    for idx, (name, definition) in enumerate(FEATURE_MANIFEST):
        w.writerow([idx, block_of[idx], name, definition])
