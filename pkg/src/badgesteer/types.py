"""Core record types shared by every stage of the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import datetime, timezone

DAY = 86400
WEEK = 7 * DAY


class ActionType(enum.IntEnum):
    EditTitle = 0
    EditBody = 1
    EditTags = 2
    VoteUp = 3
    VoteDown = 4
    Post = 5
    Other = 6

    @classmethod
    def parse(cls, name: str) -> "ActionType":
        member = cls.__members__.get(name)
        return cls.Other if member is None else member


EDIT_TYPES = frozenset({ActionType.EditTitle, ActionType.EditBody, ActionType.EditTags})
VOTE_TYPES = frozenset({ActionType.VoteUp, ActionType.VoteDown})


class ActionClass(str, enum.Enum):
    Edit = "Edit"
    Vote = "Vote"
    Other = "Other"

    @classmethod
    def parse(cls, name: str) -> "ActionClass":
        key = name.strip().capitalize()
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown action class {name!r}") from None

    @property
    def action_types(self) -> frozenset:
        if self is ActionClass.Edit:
            return EDIT_TYPES
        if self is ActionClass.Vote:
            return VOTE_TYPES
        return frozenset({ActionType.Post, ActionType.Other})


class Tier(enum.IntEnum):
    Bronze = 1
    Silver = 2
    Gold = 3


class Group(enum.IntEnum):
    """Activity group, ordered Low < Medium < High."""

    Low = 0
    Medium = 1
    High = 2


# Data-dump convention for the Badges.xml ``Class`` attribute.
DUMP_CLASS_TO_TIER = {1: Tier.Gold, 2: Tier.Silver, 3: Tier.Bronze}


def utc(ts: int | float) -> datetime:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc)


def epoch(dt: datetime) -> int:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 timestamp to epoch seconds; naive values are UTC."""
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    return epoch(dt)


def iso(ts: int) -> str:
    return utc(ts).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True, order=True)
class ActionEvent:
    user_id: int
    ts: int
    action_type: ActionType
    post_id: int | None = None
    comment_len: int | None = None
    own_post: bool | None = None

    def __post_init__(self):
        if self.user_id < 0:
            raise ValueError("user_id must be non-negative")
        if self.action_type in EDIT_TYPES and self.comment_len is None:
            object.__setattr__(self, "comment_len", 0)

    @property
    def when(self) -> datetime:
        return utc(self.ts)


@dataclass(frozen=True, order=True)
class BadgeAward:
    user_id: int
    ts: int
    badge_name: str
    tier: Tier
    action_class: ActionClass

    @property
    def when(self) -> datetime:
        return utc(self.ts)


@dataclass(frozen=True)
class UserRecord:
    user_id: int
    account_created: int
    reputation: int | None = None


@dataclass(frozen=True)
class BadgeSpec:
    action_class: ActionClass
    tier: Tier
    threshold: int

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("badge threshold must be positive")


DEFAULT_BADGE_SPECS = (
    BadgeSpec(ActionClass.Edit, Tier.Bronze, 1),
    BadgeSpec(ActionClass.Edit, Tier.Silver, 80),
    BadgeSpec(ActionClass.Edit, Tier.Gold, 500),
    BadgeSpec(ActionClass.Vote, Tier.Bronze, 1),
    BadgeSpec(ActionClass.Vote, Tier.Silver, 300),
    BadgeSpec(ActionClass.Vote, Tier.Gold, 600),
)


def badge_spec(action_class: ActionClass, tier: Tier, specs=DEFAULT_BADGE_SPECS) -> BadgeSpec:
    for s in specs:
        if s.action_class == action_class and s.tier == tier:
            return s
    raise KeyError(f"no badge spec for {action_class.value}/{tier.name}")


def check_badge_specs(specs) -> None:
    """Thresholds must strictly increase with tier inside each action class."""
    by_class: dict = {}
    for s in specs:
        by_class.setdefault(s.action_class, []).append(s)
    for cls, items in by_class.items():
        items.sort(key=lambda s: s.tier)
        for lo, hi in zip(items, items[1:]):
            if lo.tier == hi.tier:
                raise ValueError(f"duplicate {hi.tier.name} spec for {cls.value}")
            if hi.threshold <= lo.threshold:
                raise ValueError(
                    f"{cls.value} thresholds must increase with tier: "
                    f"{lo.tier.name}={lo.threshold}, {hi.tier.name}={hi.threshold}"
                )


check_badge_specs(DEFAULT_BADGE_SPECS)
