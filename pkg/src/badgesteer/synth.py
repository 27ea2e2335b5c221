"""Synthetic action/badge streams with planted cohorts, steering and transitions.

Per user and day: active with ``active_day_prob``; an active day carries
``1 + Poisson(mean - 1)`` actions, so ``actions_per_active_day`` is the mean.
Once the remaining distance to the badge threshold drops below the expected
steered output of ``steer_window_days``, the daily mean is multiplied by
``steer_multiplier``. After the crossing day the rate is multiplied by
``post_badge_multiplier`` for ``sustain_days`` and then reverts. The badge is
awarded at the action that reaches the threshold.

Each user draws from its own generator seeded by ``(seed, user_id)``, so the
output does not depend on how users are scheduled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np

from .eventlog import EventLog
from .features import BLOCKS, FEATURE_NAMES
from .types import DAY, ActionClass, ActionType, BadgeAward, BadgeSpec, Tier, UserRecord, iso

EPOCH_DAY = 16436  # 2015-01-01

BADGE_NAMES = {
    (ActionClass.Edit, Tier.Bronze): "Editor",
    (ActionClass.Edit, Tier.Silver): "Strunk & White",
    (ActionClass.Edit, Tier.Gold): "Copy Editor",
    (ActionClass.Vote, Tier.Bronze): "Supporter",
    (ActionClass.Vote, Tier.Silver): "Civic Duty",
    (ActionClass.Vote, Tier.Gold): "Electorate",
}


@dataclass(frozen=True)
class CohortSpec:
    name: str
    n_users: int
    active_day_prob: float
    actions_per_active_day: float = 1.0
    steer_window_days: int = 0
    steer_multiplier: float = 1.0
    post_badge_multiplier: float = 1.0
    sustain_days: int = 0
    badge_spec: BadgeSpec | None = None
    extra_badges: tuple = ()
    # explicit post-badge levels; override post_badge_multiplier when set
    post_active_day_prob: float | None = None
    post_actions_per_active_day: float | None = None

    def __post_init__(self):
        if self.n_users < 0:
            raise ValueError("n_users must be non-negative")
        for name in ("active_day_prob", "post_active_day_prob"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability")
        for name in ("actions_per_active_day", "post_actions_per_active_day"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 1.0):
                raise ValueError(f"{name} must be a finite mean >= 1")
        if not (math.isfinite(self.steer_multiplier) and self.steer_multiplier >= 1.0):
            raise ValueError("steer_multiplier must be finite and >= 1")
        if not (math.isfinite(self.post_badge_multiplier) and self.post_badge_multiplier > 0):
            raise ValueError("post_badge_multiplier must be finite and > 0")
        if self.sustain_days < 0 or self.steer_window_days < 0:
            raise ValueError("day counts must be non-negative")

    @property
    def daily_rate(self) -> float:
        return self.active_day_prob * self.actions_per_active_day

    @property
    def weekly_rate(self) -> float:
        return 7.0 * self.daily_rate

    @property
    def steered_mean(self) -> float:
        return self.actions_per_active_day * self.steer_multiplier

    def post_levels(self) -> tuple[float, float]:
        """(active-day probability, mean actions per active day) after the badge."""
        if self.post_active_day_prob is not None or self.post_actions_per_active_day is not None:
            q = self.active_day_prob if self.post_active_day_prob is None else self.post_active_day_prob
            mu = self.actions_per_active_day if self.post_actions_per_active_day is None else self.post_actions_per_active_day
            return q, mu
        mu = self.actions_per_active_day * self.post_badge_multiplier
        if mu >= 1.0:
            return self.active_day_prob, mu
        # below one action per active day the rate cut moves to the activity gate
        return self.active_day_prob * mu, 1.0

    def expected_crossing_days(self) -> float | None:
        if self.badge_spec is None:
            return None
        if self.daily_rate <= 0:
            return math.inf
        return self.badge_spec.threshold / self.daily_rate


@dataclass(frozen=True)
class GroundTruth:
    user_id: int
    cohort: str
    start_day: int
    crossing_day: int | None  # absolute UTC day number
    award_ts: int | None
    steer_start_day: int | None
    pre_weekly_rate: float
    post_weekly_rate: float

    def record(self) -> dict:
        return {
            "user_id": self.user_id,
            "cohort": self.cohort,
            "start_day": self.start_day,
            "crossing_day": self.crossing_day,
            "award_ts": None if self.award_ts is None else iso(self.award_ts),
            "steer_start_day": self.steer_start_day,
            "pre_weekly_rate": self.pre_weekly_rate,
            "post_weekly_rate": self.post_weekly_rate,
        }


@dataclass
class SynthResult:
    events: EventLog
    awards: list
    truth: list
    users: list = field(default_factory=list)

    def truth_by_user(self) -> dict:
        return {t.user_id: t for t in self.truth}


def _counts(rng, n_days: int, q: float, mu: float) -> np.ndarray:
    active = rng.random(n_days) < q
    return np.where(active, 1 + rng.poisson(mu - 1.0, n_days), 0)


def _first_reach(cum: np.ndarray, target: float) -> int:
    """First index whose cumulative value reaches ``target`` (len if never)."""
    return int(np.searchsorted(cum, target, side="left"))


def _action_types(rng, action_class: ActionClass, n: int) -> np.ndarray:
    if action_class is ActionClass.Edit:
        return rng.choice([ActionType.EditTitle, ActionType.EditBody, ActionType.EditTags], n, p=[0.2, 0.6, 0.2])
    if action_class is ActionClass.Vote:
        return rng.choice([ActionType.VoteUp, ActionType.VoteDown], n, p=[0.8, 0.2])
    return np.full(n, int(ActionType.Other))


def _simulate_user(uid: int, cohort: CohortSpec, horizon: int, seed: int, start_spread: int, other_rate: float):
    rng = np.random.default_rng(np.random.SeedSequence([seed, uid]))
    start = int(rng.integers(0, start_spread + 1)) if start_spread else 0
    n_days = horizon - start
    base = _counts(rng, n_days, cohort.active_day_prob, cohort.actions_per_active_day)
    steer = _counts(rng, n_days, cohort.active_day_prob, cohort.steered_mean)
    q_post, mu_post = cohort.post_levels()
    post = _counts(rng, n_days, q_post, mu_post)
    daily = base.copy()
    spec = cohort.badge_spec
    crossing = steer_start = None
    if spec is not None:
        T = spec.threshold
        cum_base = np.concatenate([[0], np.cumsum(base)])  # actions before day d
        lead = cohort.steer_window_days * cohort.active_day_prob * cohort.steered_mean
        s = _first_reach(cum_base[:-1], T - lead) if cohort.steer_window_days else n_days
        s = min(s, n_days)
        daily[s:] = steer[s:]
        cum = np.cumsum(daily)
        c = _first_reach(cum, T)
        if c < n_days:
            crossing = c
            steer_start = s if s <= c else None
            end_sustain = min(n_days, c + 1 + cohort.sustain_days)
            daily[c + 1:end_sustain] = post[c + 1:end_sustain]
            daily[end_sustain:] = base[end_sustain:]
    n_ev = int(daily.sum())
    day_of = np.repeat(np.arange(n_days), daily)
    ts = np.sort((EPOCH_DAY + start + day_of) * DAY + rng.integers(0, DAY, n_ev))
    cls = spec.action_class if spec is not None else ActionClass.Edit
    types = _action_types(rng, cls, n_ev).astype(np.int8)
    posts = rng.integers(1, 50_000, n_ev)
    clen = np.where(rng.random(n_ev) < 0.3, 0, rng.poisson(25, n_ev)) if cls is ActionClass.Edit else np.full(n_ev, -1)
    own = (rng.random(n_ev) < 0.1).astype(np.int8) if cls is ActionClass.Edit else np.full(n_ev, -1, np.int8)
    cols = [np.full(n_ev, uid), ts, types, posts, clen, own]
    if other_rate > 0:
        n_other = rng.poisson(other_rate * n_days)
        ots = (EPOCH_DAY + start) * DAY + np.sort(rng.integers(0, n_days * DAY, n_other))
        other = [np.full(n_other, uid), ots, np.full(n_other, int(ActionType.Post), np.int8),
                 rng.integers(50_000, 100_000, n_other), np.full(n_other, -1), np.full(n_other, -1, np.int8)]
        cols = [np.concatenate([a, b]) for a, b in zip(cols, other)]

    awards = []
    award_ts = None
    qual = ts  # qualifying-action timestamps in order
    for s_spec in ((spec,) if spec is not None else ()) + tuple(cohort.extra_badges):
        if s_spec.threshold <= len(qual):
            t = int(qual[s_spec.threshold - 1])
            awards.append(BadgeAward(uid, t, BADGE_NAMES.get((s_spec.action_class, s_spec.tier), f"{s_spec.tier.name} badge"),
                                     s_spec.tier, s_spec.action_class))
            if s_spec is spec:
                award_ts = t
    truth = GroundTruth(
        user_id=uid,
        cohort=cohort.name,
        start_day=EPOCH_DAY + start,
        crossing_day=None if crossing is None else EPOCH_DAY + start + crossing,
        award_ts=award_ts,
        steer_start_day=None if steer_start is None else EPOCH_DAY + start + steer_start,
        pre_weekly_rate=cohort.weekly_rate,
        post_weekly_rate=7.0 * q_post * mu_post,
    )
    created = (EPOCH_DAY + start - int(rng.integers(0, 365))) * DAY
    return cols, awards, truth, UserRecord(uid, created, None)


def check_horizon(cohorts: Sequence[CohortSpec], horizon_days: int, start_spread: int = 0) -> None:
    for c in cohorts:
        t = c.expected_crossing_days()
        if t is not None and c.n_users and t > horizon_days - start_spread:
            raise ValueError(
                f"cohort {c.name!r}: expected threshold crossing after {t:.1f} days "
                f"exceeds the usable horizon of {horizon_days - start_spread} days"
            )


def generate(
    cohorts: Sequence[CohortSpec],
    horizon_days: int,
    seed: int = 42,
    start_spread_days: int = 0,
    other_rate: float = 0.0,
    first_user_id: int = 1,
) -> SynthResult:
    check_horizon(cohorts, horizon_days, start_spread_days)
    columns, awards, truth, users = [], [], [], []
    uid = first_user_id
    for cohort in cohorts:
        for _ in range(cohort.n_users):
            cols, aw, gt, rec = _simulate_user(uid, cohort, horizon_days, seed, start_spread_days, other_rate)
            columns.append(cols)
            awards.extend(aw)
            truth.append(gt)
            users.append(rec)
            uid += 1
    if columns:
        log = EventLog(*(np.concatenate([c[i] for c in columns]) for i in range(6)))
    else:
        log = EventLog.empty()
    return SynthResult(log, awards, truth, users)


# analytic expectations --------------------------------------------------------


def _shifted_poisson_pmf(mean: float, kmax: int) -> np.ndarray:
    lam = mean - 1.0
    k = np.arange(kmax)
    pmf = np.zeros(kmax)
    if lam == 0:
        pmf[1] = 1.0
        return pmf
    logp = -lam + (k[1:] - 1) * math.log(lam) - np.array([math.lgamma(j) for j in k[1:]])
    pmf[1:] = np.exp(logp)
    return pmf


def _median_of(pmf: np.ndarray) -> float:
    cdf = np.cumsum(pmf / pmf.sum())
    return float(np.searchsorted(cdf, 0.5))


def steered_day_median(cohort: CohortSpec, crossing_day: bool = True) -> float:
    """Median day count on a steered active day; on the crossing day itself the
    count distribution is size-biased (a busier day is more likely to contain
    the threshold action)."""
    mu = cohort.steered_mean
    kmax = int(mu + 20 * math.sqrt(mu) + 20)
    pmf = _shifted_poisson_pmf(mu, kmax)
    if crossing_day:
        pmf = pmf * np.arange(kmax)
    return _median_of(pmf)


# ready-made populations -------------------------------------------------------

PLANTED_LEVELS = {
    # (active-day probability, mean actions per active day): ~0.35, 3.5 and 13 actions/week
    "Low": (0.05, 1.0),
    "Medium": (0.5, 1.0),
    "High": (0.95, 2.0),
}


def planted_cohorts(n_users: int, badge_spec: BadgeSpec | None = None, shares=(1 / 3, 1 / 3, 1 / 3)) -> list:
    sizes = _apportion(n_users, shares)
    return [
        CohortSpec(name, int(n), q, mu, badge_spec=badge_spec)
        for (name, (q, mu)), n in zip(PLANTED_LEVELS.items(), sizes)
    ]


TRANSITION_THRESHOLDS = {"Low": 10, "Medium": 40, "High": 150}


def transition_cohorts(n_users: int, matrix, badge_spec: BadgeSpec, from_shares=None,
                       thresholds: Mapping[str, int] | None = None) -> list:
    """Nine cohorts realising a planted group-transition matrix.

    Cohort sizes are apportioned exactly, so the realised matrix equals the
    planted one up to rounding. Each from-group gets its own threshold so the
    pre-badge span covers several weeks for every group.
    """
    thresholds = TRANSITION_THRESHOLDS if thresholds is None else thresholds
    matrix = np.asarray(matrix, float)
    if matrix.shape != (3, 3) or not np.allclose(matrix.sum(axis=1), 1.0):
        raise ValueError("transition matrix must be 3x3 row-stochastic")
    from_shares = np.full(3, 1 / 3) if from_shares is None else np.asarray(from_shares)
    n_from = _apportion(n_users, from_shares)
    names = list(PLANTED_LEVELS)
    out = []
    for i, a in enumerate(names):
        n_to = _apportion(int(n_from[i]), matrix[i])
        qa, mua = PLANTED_LEVELS[a]
        for j, b in enumerate(names):
            qb, mub = PLANTED_LEVELS[b]
            spec = BadgeSpec(badge_spec.action_class, badge_spec.tier, int(thresholds[a]))
            out.append(CohortSpec(
                f"{a}->{b}", int(n_to[j]), qa, mua, badge_spec=spec,
                sustain_days=10**6, post_active_day_prob=qb, post_actions_per_active_day=mub,
            ))
    return out


def _apportion(n: int, shares) -> np.ndarray:
    """Largest-remainder integer split of ``n`` by ``shares``."""
    shares = np.asarray(shares, float) / np.sum(shares)
    raw = shares * n
    out = np.floor(raw).astype(int)
    rest = n - out.sum()
    out[np.argsort(-(raw - out), kind="stable")[:rest]] += 1
    return out


def generate_badge_paths(path_probs: Mapping[tuple, float], n_users: int, seed: int = 42,
                         first_user_id: int = 1) -> tuple[list, dict]:
    """Awards realising a distribution over chronological badge orders.

    Returns the awards and the planted path of every user.
    """
    names = {v: k for k, v in {
        (Tier.Silver, ActionClass.Vote): "silver-vote",
        (Tier.Silver, ActionClass.Edit): "silver-edit",
        (Tier.Gold, ActionClass.Vote): "gold-vote",
        (Tier.Gold, ActionClass.Edit): "gold-edit",
    }.items()}
    paths = list(path_probs)
    probs = np.asarray([path_probs[p] for p in paths], float)
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(paths), n_users, p=probs)
    awards, planted = [], {}
    for k, uid in enumerate(range(first_user_id, first_user_id + n_users)):
        path = paths[picks[k]]
        planted[uid] = tuple(path)
        t = (EPOCH_DAY + int(rng.integers(0, 365))) * DAY
        for step in path:
            t += int(rng.integers(1, 200)) * DAY
            tier, cls = names[step]
            awards.append(BadgeAward(uid, t, BADGE_NAMES[(cls, tier)], tier, cls))
    return awards, planted


def make_decline_dataset(n: int, noise: float = 0.05, signal: str = "last3w_mean_consistency",
                         seed: int = 42) -> tuple[np.ndarray, np.ndarray]:
    """A 59-column feature matrix whose label thresholds one temporal feature.

    U and E columns are pure noise; the label is ``x + noise * sd(x) * e > median(x)``.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, len(FEATURE_NAMES)))
    j = FEATURE_NAMES.index(signal)
    if j not in BLOCKS["T"]:
        raise ValueError("signal feature must be temporal")
    x = X[:, j]
    y = (x + noise * x.std() * rng.normal(size=n) > np.median(x)).astype(np.int64)
    return X, y


def write_truth_jsonl(truth: Sequence[GroundTruth], fh: IO[str]) -> None:
    for t in truth:
        fh.write(json.dumps(t.record(), sort_keys=True, separators=(",", ":")) + "\n")


def pipeline_cohorts(n_users: int) -> list:
    """A mixed edit population with steering, declines and catalysts."""
    silver = BadgeSpec(ActionClass.Edit, Tier.Silver, 80)
    extra = (BadgeSpec(ActionClass.Edit, Tier.Bronze, 1), BadgeSpec(ActionClass.Edit, Tier.Gold, 500))
    plan = [
        # name, share, q, mu, steer, post multiplier, sustain
        ("low", 0.30, 0.2, 1.0, 2.0, 1.0, 0),
        ("medium", 0.20, 0.5, 1.5, 2.5, 1.0, 0),
        ("medium-decline", 0.15, 0.5, 1.5, 2.5, 0.15, 10**6),
        ("high", 0.15, 0.9, 3.0, 2.0, 1.0, 0),
        ("high-decline", 0.10, 0.9, 3.0, 2.0, 0.1, 10**6),
        ("catalyst", 0.10, 0.5, 1.5, 2.5, 3.0, 60),
    ]
    sizes = _apportion(n_users, [p[1] for p in plan])
    return [
        CohortSpec(name, int(n), q, mu, steer_window_days=5, steer_multiplier=steer,
                   post_badge_multiplier=post, sustain_days=sustain, badge_spec=silver, extra_badges=extra)
        for (name, _, q, mu, steer, post, sustain), n in zip(plan, sizes)
    ]


def add_vote_badges(result: SynthResult, share: float = 0.3, gold_share: float = 0.4,
                    horizon_days: int = 720, seed: int = 42) -> None:
    """Vote badges without vote events (public dumps carry badges but not votes)."""
    for t in result.truth:
        rng = np.random.default_rng(np.random.SeedSequence([seed, t.user_id, 1]))
        if rng.random() >= share:
            continue
        day = t.start_day + int(rng.integers(0, horizon_days))
        ts = day * DAY + int(rng.integers(0, DAY))
        result.awards.append(BadgeAward(t.user_id, ts, BADGE_NAMES[(ActionClass.Vote, Tier.Silver)],
                                        Tier.Silver, ActionClass.Vote))
        if rng.random() < gold_share:
            ts += int(rng.integers(1, 300)) * DAY
            result.awards.append(BadgeAward(t.user_id, ts, BADGE_NAMES[(ActionClass.Vote, Tier.Gold)],
                                            Tier.Gold, ActionClass.Vote))
    result.awards.sort(key=lambda a: (a.user_id, a.ts, a.badge_name))


def pipeline_scenario(n_users: int = 1200, horizon_days: int = 720, seed: int = 42) -> SynthResult:
    res = generate(pipeline_cohorts(n_users), horizon_days, seed=seed, start_spread_days=60, other_rate=0.05)
    add_vote_badges(res, horizon_days=horizon_days, seed=seed)
    return res
