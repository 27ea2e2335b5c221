"""Command-line pipeline: ingest -> profile -> cluster -> steering/flows -> features -> train/evaluate/ablate -> report.

Every subcommand reads upstream artifacts from the output directory, writes
its own outputs there and leaves a JSON run manifest under ``manifests/``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import click

from . import __version__
from .types import ActionClass, BadgeSpec, Tier

SCHEMA_LINE = "# schema_version: 1"
DATA_DIR_ENV = "BADGESTEER_DATA"

EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3


class ConfigError(Exception):
    pass


class MissingArtifact(Exception):
    def __init__(self, path: Path, producer: str):
        super().__init__(f"missing artifact {path}; run `badgesteer {producer}` first")
        self.path = path
        self.producer = producer


# configuration ----------------------------------------------------------------


@dataclass
class RunConfig:
    # inputs
    posthistory: str | None = None
    posts: str | None = None
    badges: str | None = None
    users: str | None = None
    class_map: str | None = None
    events: str | None = None  # JSONL events (synth or generic)
    badges_jsonl: str | None = None
    users_jsonl: str | None = None
    # analysis
    action_class: str = "edit"
    seed: int = 42
    threads: int = 1
    edit_thresholds: str = "1,80,500"
    vote_thresholds: str = "1,300,600"
    n_clusters: int = 3
    trim_percentile: float = 99.9
    cluster_update: str = "mean"
    cluster_fit_on: str = "presilver"
    window: int = 60
    aggregator: str = "median"
    deltas: str = "0,10"
    anova_offsets: str = "-30,-7,0,7,30"
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    folds: int = 10
    synth_users: int = 1200
    synth_horizon: int = 720
    out: str = "artifacts"

    def badge_specs(self) -> tuple:
        out = []
        for cls, text in ((ActionClass.Edit, self.edit_thresholds), (ActionClass.Vote, self.vote_thresholds)):
            vals = [int(v) for v in text.split(",")]
            if len(vals) != 3:
                raise ConfigError(f"{cls.value.lower()}_thresholds needs three values")
            out += [BadgeSpec(cls, t, v) for t, v in zip((Tier.Bronze, Tier.Silver, Tier.Gold), vals)]
        from .types import check_badge_specs

        try:
            check_badge_specs(out)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return tuple(out)

    @property
    def cls(self) -> ActionClass:
        return ActionClass.parse(self.action_class)

    def model_config(self):
        from .model import GBDTConfig

        return GBDTConfig(self.n_trees, self.max_depth, self.learning_rate, self.min_samples_leaf, self.seed)

    def int_list(self, name: str) -> list:
        text = getattr(self, name).strip()
        return [int(v) for v in text.split(",")] if text else []


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str, source: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r} ({source})")
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}={raw!r} is not a valid {kind} ({source})") from None
    return raw


def read_config_file(path: str) -> dict:
    """``key = value`` lines; ``#`` comments. A run manifest (JSON) also works."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = p.read_text()
    if p.suffix == ".json":
        snap = json.loads(text).get("config", {})
        return {k: (str(v), f"{path}:config") for k, v in snap.items() if v is not None}
    seen: dict = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        src = f"{path}:{n}"
        if key in seen and seen[key][0] != value:
            raise ConfigError(
                f"conflicting values for {key!r}: {seen[key][0]!r} ({seen[key][1]}) vs {value!r} ({src})"
            )
        seen[key] = (value, src)
    return seen


def build_config(config_path, overrides: dict, sets: tuple) -> RunConfig:
    values: dict = {}
    if config_path:
        values.update(read_config_file(config_path))
    set_seen: dict = {}
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key in set_seen and set_seen[key] != value:
            raise ConfigError(f"conflicting values for {key!r}: {set_seen[key]!r} (--set) vs {value!r} (--set)")
        set_seen[key] = value
        values[key] = (value, "--set")
    for key, value in overrides.items():
        if value is not None:
            values[key] = (str(value), f"--{key.replace('_', '-')}")
    kw = {k: _coerce(k, v, src) for k, (v, src) in values.items()}
    cfg = RunConfig(**kw)
    if cfg.action_class.lower() not in ("edit", "vote"):
        raise ConfigError(f"action_class must be edit or vote, got {cfg.action_class!r}")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


# artifacts & manifests ----------------------------------------------------------


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Bookkeeping for one subcommand invocation."""

    PRODUCERS = {
        "events.npz": "ingest",
        "awards.jsonl": "ingest",
        "users.jsonl": "ingest",
        "profiles.csv": "profile",
        "segments.csv": "profile",
        "cluster_model.txt": "cluster",
        "groups.csv": "cluster",
        "group_counts.csv": "cluster",
        "steering_curves.csv": "steering",
        "transitions.csv": "flows",
        "badge_paths.csv": "flows",
        "cooccurrence.csv": "flows",
        "features.csv": "features",
        "gbdt_model.txt": "train",
        "evaluation.csv": "evaluate",
        "ablation.csv": "ablate",
        "synth/events.jsonl": "synth",
    }

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.inputs: dict = {}
        self.outputs: list = []
        self.started = time.monotonic()

    def need(self, name: str) -> Path:
        p = self.out / name
        if not p.exists():
            raise MissingArtifact(p, self.PRODUCERS.get(name, "?"))
        self.inputs[str(p)] = sha256(p)
        return p

    def external(self, path: str | None, key: str) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"{key}: input file {path} does not exist")
        self.inputs[str(p)] = sha256(p)
        return p

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def open(self, name: str, schema: bool = False):
        fh = open(self.path(name), "w", newline="")
        if schema:
            fh.write(SCHEMA_LINE + "\n")
        return fh

    def finish(self, extra: dict | None = None) -> dict:
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "config": asdict(self.cfg),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {str(p): sha256(p) for p in self.outputs},
            "wall_time_s": round(time.monotonic() - self.started, 3),
        }
        if extra:
            manifest.update(extra)
        mpath = self.out / "manifests" / f"{self.command}.json"
        mpath.parent.mkdir(parents=True, exist_ok=True)
        mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        return manifest


def _set_threads(n: int) -> None:
    # read by numba and BLAS at import time; every heavy import here is lazy
    for var in ("NUMBA_NUM_THREADS", "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
        os.environ[var] = str(min(n, os.cpu_count() or 1))


# shared readers --------------------------------------------------------------------


def _data_lines(path: Path):
    with open(path, newline="") as fh:
        return [l for l in fh if not l.startswith("#")]


def read_profiles(path: Path):
    from .metrics import ActivityProfile, Window

    out = []
    for row in csv.DictReader(_data_lines(path)):
        out.append((row, ActivityProfile(
            int(row["user_id"]), Window(int(row["window_start"]), int(row["window_end"])),
            float(row["consistency"]), float(row["intensity"]),
        )))
    return out


def read_awards(path: Path):
    from .ingest import parse_generic_badges

    return list(parse_generic_badges(str(path)))


def read_groups(path: Path) -> dict:
    from .types import Group

    return {int(r["user_id"]): Group[r["group"]] for r in csv.DictReader(_data_lines(path))}


def load_group_model(run: Run):
    from .cluster import ActivityGroupModel

    return ActivityGroupModel.from_text(run.need("cluster_model.txt").read_text())


def load_features(run: Run):
    from .features import read_features_csv

    with open(run.need("features.csv"), newline="") as fh:
        return read_features_csv(fh)


# commands ---------------------------------------------------------------------------


def common_options(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="key=value configuration file (or a run manifest)."),
        click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="Override one configuration key."),
        click.option("--action-class", type=click.Choice(["edit", "vote"], case_sensitive=False), default=None),
        click.option("--seed", type=int, default=None, help="Seed for every random choice (default 42)."),
        click.option("--threads", type=int, default=None, help="Cap on worker threads."),
        click.option("--out", type=click.Path(), default=None,
                     help=f"Artifact directory (default ${DATA_DIR_ENV} or ./artifacts)."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _error_report(command: str, exc: Exception, code: int) -> None:
    rep = {"status": "error", "command": command, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, MissingArtifact):
        rep["producer"] = exc.producer
        rep["artifact"] = str(exc.path)
    click.echo(json.dumps(rep, sort_keys=True), err=True)


def command(name: str):
    """Register a subcommand that receives a ``Run``; errors become JSON reports."""

    def deco(fn):
        @cli.command(name, help=fn.__doc__)
        @common_options
        def wrapper(config_path, sets, action_class, seed, threads, out):
            try:
                cfg = build_config(config_path, {
                    "action_class": action_class, "seed": seed, "threads": threads,
                    "out": out if out is not None else os.environ.get(DATA_DIR_ENV),
                }, sets)
                _set_threads(cfg.threads)
                run = Run(name, cfg)
                run.out.mkdir(parents=True, exist_ok=True)
                extra = fn(run)
                manifest = run.finish(extra)
                click.echo(json.dumps({"status": "ok", "command": name,
                                       "outputs": sorted(manifest["outputs"])}, sort_keys=True))
            except ConfigError as exc:
                _error_report(name, exc, EXIT_CONFIG)
                sys.exit(EXIT_CONFIG)
            except MissingArtifact as exc:
                _error_report(name, exc, EXIT_MISSING)
                sys.exit(EXIT_MISSING)
            except Exception as exc:  # noqa: BLE001 - every failure gets a report
                _error_report(name, exc, EXIT_ERROR)
                sys.exit(EXIT_ERROR)

        return wrapper

    return deco


@click.group()
@click.version_option(__version__, prog_name="badgesteer")
def cli():
    """Badge steering analysis pipeline."""


@command("synth")
def cmd_synth(run: Run):
    """Generate a synthetic population as ingest-ready JSONL plus ground truth."""
    from .ingest import write_badges_jsonl, write_users_jsonl
    from .synth import pipeline_scenario, write_truth_jsonl

    cfg = run.cfg
    res = pipeline_scenario(cfg.synth_users, cfg.synth_horizon, cfg.seed)
    with run.open("synth/events.jsonl") as fh:
        res.events.write_jsonl(fh)
    with run.open("synth/badges.jsonl") as fh:
        write_badges_jsonl(res.awards, fh)
    with run.open("synth/users.jsonl") as fh:
        write_users_jsonl(res.users, fh)
    with run.open("synth/truth.jsonl") as fh:
        write_truth_jsonl(res.truth, fh)
    return {"counts": {"events": len(res.events), "awards": len(res.awards), "users": len(res.users)}}


@command("ingest")
def cmd_ingest(run: Run):
    """Parse dump XML or JSONL inputs into the columnar event store."""
    from .eventlog import EventLog
    from .ingest import (
        DEFAULT_CLASS_MAP, RejectReport, load_class_map, parse_badges, parse_generic_badges,
        parse_generic_events, parse_post_history, parse_posts, parse_users, read_users_jsonl,
        write_badges_jsonl, write_users_jsonl,
    )

    cfg = run.cfg
    if cfg.events is None and cfg.posthistory is None:
        synth_events = run.out / "synth" / "events.jsonl"
        if not synth_events.exists():
            raise ConfigError("no event input: set posthistory=PATH or events=PATH (or run `badgesteer synth`)")
        cfg.events = str(synth_events)
        cfg.badges_jsonl = cfg.badges_jsonl or str(run.out / "synth" / "badges.jsonl")
        cfg.users_jsonl = cfg.users_jsonl or str(run.out / "synth" / "users.jsonl")
    reports = []
    logs = []
    owners = None
    if cfg.posts:
        rep = RejectReport()
        posts = list(parse_posts(str(run.external(cfg.posts, "posts")), rep))
        reports.append(rep)
        owners = {e.post_id: e.user_id for e in posts}
        logs.append(EventLog.from_events(posts))
    if cfg.posthistory:
        rep = RejectReport()
        logs.append(EventLog.from_events(parse_post_history(str(run.external(cfg.posthistory, "posthistory")),
                                                            rep, post_owners=owners)))
        reports.append(rep)
    if cfg.events:
        rep = RejectReport()
        logs.append(EventLog.from_events(parse_generic_events(str(run.external(cfg.events, "events")), rep)))
        reports.append(rep)
    log = EventLog.concat(logs)
    awards = []
    class_map = load_class_map(str(run.external(cfg.class_map, "class_map"))) if cfg.class_map else DEFAULT_CLASS_MAP
    if cfg.badges:
        rep = RejectReport()
        awards += list(parse_badges(str(run.external(cfg.badges, "badges")), class_map, rep))
        reports.append(rep)
    if cfg.badges_jsonl:
        rep = RejectReport()
        awards += list(parse_generic_badges(str(run.external(cfg.badges_jsonl, "badges_jsonl")), rep))
        reports.append(rep)
    users = []
    if cfg.users:
        rep = RejectReport()
        users += list(parse_users(str(run.external(cfg.users, "users")), rep))
        reports.append(rep)
    if cfg.users_jsonl:
        users += read_users_jsonl(str(run.external(cfg.users_jsonl, "users_jsonl")))
    log.save_npz(run.path("events.npz"))
    with run.open("awards.jsonl") as fh:
        write_badges_jsonl(awards, fh)
    with run.open("users.jsonl") as fh:
        write_users_jsonl(users, fh)
    with run.open("rejects.jsonl") as fh:
        for rep in reports:
            rep.write_jsonl(fh)
    summary = [r.summary() for r in reports]
    with run.open("ingest_report.json") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"accounting": summary}


def _load_events(run: Run):
    from .eventlog import EventLog

    return EventLog.load_npz(run.need("events.npz"))


@command("profile")
def cmd_profile(run: Run):
    """Consistency/intensity profiles over each user's span and lifecycle segments."""
    from .flows import lifecycle_population
    from .metrics import PROFILE_COLUMNS, Window, _fmt, profile_from_timestamps, write_profiles_csv

    log = _load_events(run).of_class(run.cfg.cls)
    awards = read_awards(run.need("awards.jsonl"))
    profiles = [
        profile_from_timestamps(uid, Window(int(ev.ts[0]), int(ev.ts[-1]) + 1), ev.ts)
        for uid, ev in sorted(log.split_by_user().items())
    ]
    with run.open("profiles.csv") as fh:
        write_profiles_csv(profiles, fh, SCHEMA_LINE)
    population, rejected = lifecycle_population(log, awards, run.cfg.cls)
    with run.open("segments.csv", schema=True) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment", *PROFILE_COLUMNS])
        for uid in sorted(population):
            for seg, p in population[uid].items():
                w.writerow([seg.value, p.user_id, p.window.start, p.window.end,
                            _fmt(p.consistency), _fmt(p.intensity), _fmt(p.rate), p.n_weeks])
    return {"counts": {"profiles": len(profiles), "lifecycles": len(population), "rejected": len(rejected)}}


def _segment_population(run: Run):
    from .flows import Segment

    pop: dict = {}
    for row, prof in read_profiles(run.need("segments.csv")):
        pop.setdefault(prof.user_id, {})[Segment(row["segment"])] = prof
    return pop


@command("cluster")
def cmd_cluster(run: Run):
    """Fit the three activity groups and tabulate groups by badge tier."""
    from .cluster import ActivityGroupModel, group_counts
    from .flows import Segment, highest_tiers
    from .metrics import profiles_matrix

    cfg = run.cfg
    full = [p for _, p in read_profiles(run.need("profiles.csv"))]
    if cfg.cluster_fit_on == "presilver":
        fit_on = [p[Segment.PreSilver] for p in _segment_population(run).values()]
    elif cfg.cluster_fit_on == "all":
        fit_on = full
    else:
        raise ConfigError("cluster_fit_on must be presilver or all")
    model = ActivityGroupModel(
        n_clusters=cfg.n_clusters, trim_percentile=cfg.trim_percentile,
        update=cfg.cluster_update, random_state=cfg.seed,
    ).fit(profiles_matrix(fit_on))
    with run.open("cluster_model.txt") as fh:
        fh.write(model.to_text())
    labels = model.predict(profiles_matrix(full)) if full else []
    from .flows import group_names

    names = group_names(cfg.n_clusters)
    with run.open("groups.csv", schema=True) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "group", "consistency", "intensity"])
        for p, g in zip(full, labels):
            w.writerow([p.user_id, names[int(g)], repr(p.consistency), repr(p.intensity)])
    awards = read_awards(run.need("awards.jsonl"))
    table = group_counts(model, full, highest_tiers(awards, cfg.cls))
    with run.open("group_counts.csv", schema=True) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["highest_tier", *table.groups, "Total"])
        w.writerows(table.as_rows())
    return {"model": {"centroids": model.centroids_.tolist(), "converged": bool(model.converged_),
                      "n_iter": int(model.n_iter_)}}


@command("steering")
def cmd_steering(run: Run):
    """Activity curves around the silver award and around threshold+delta crossings."""
    from .eventlog import DailyCounts
    from .flows import tier_awards
    from .steering import (
        Aggregator, CenteringMode, CenteringRule, curves, day_zeros, group_anova, write_anova_jsonl,
    )
    from .types import badge_spec

    cfg = run.cfg
    log = _load_events(run).of_class(cfg.cls)
    awards = read_awards(run.need("awards.jsonl"))
    groups = read_groups(run.need("groups.csv"))
    by_user: dict = {}
    for a in awards:
        by_user.setdefault(a.user_id, []).append(a)
    silver = {u: t[Tier.Silver] for u, aw in by_user.items() if Tier.Silver in (t := tier_awards(aw, cfg.cls))}
    present = set(log.users().tolist())
    silver = {u: a for u, a in silver.items() if u in present}
    daily = DailyCounts.from_log(log)
    spec = badge_spec(cfg.cls, Tier.Silver, cfg.badge_specs())
    rules = [("badge", CenteringRule())] + [
        (f"threshold{d:+d}", CenteringRule(CenteringMode.CumulativeThreshold, d, spec)) for d in cfg.int_list("deltas")
    ]
    agg = Aggregator(cfg.aggregator)
    badge_set = None
    with run.open("steering_curves.csv", schema=True) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["centering", "group", "aggregator", "offset", "statistic", "n"])
        for label, rule in rules:
            zeros = day_zeros(log, rule, silver)
            cs = curves(daily, zeros, groups, agg, cfg.window)
            if label == "badge":
                badge_set = cs
            for name, c in cs.curves.items():
                for o, v, n in zip(c.offsets, c.values, c.n):
                    w.writerow([label, name, agg.value, int(o), repr(float(v)), int(n)])
    tests = group_anova(badge_set, [o for o in cfg.int_list("anova_offsets") if abs(o) <= cfg.window]) \
        if badge_set is not None and badge_set.groups is not None else []
    with run.open("steering_anova.jsonl") as fh:
        write_anova_jsonl(tests, fh)
    return {"counts": {"centred_users": len(silver)}}


@command("flows")
def cmd_flows(run: Run):
    """Group transitions between lifecycle segments, badge co-occurrence and badge order."""
    from .flows import (
        Segment, badge_paths, cooccurrence, transitions, write_cooccurrence_csv, write_paths_csv,
        write_sankey_json, write_transitions_csv,
    )

    model = load_group_model(run)
    pop = _segment_population(run)
    pairs = [(Segment.PreSilver, Segment.SilverToGold), (Segment.SilverToGold, Segment.PostGold),
             (Segment.PreSilver, Segment.PostSilver)]
    mats = [transitions(pop, a, b, model) for a, b in pairs]
    with run.open("transitions.csv") as fh:
        write_transitions_csv(mats, fh, SCHEMA_LINE)
    with run.open("sankey.json") as fh:
        write_sankey_json(mats, fh)
    awards = read_awards(run.need("awards.jsonl"))
    with run.open("cooccurrence.csv") as fh:
        write_cooccurrence_csv(cooccurrence(awards), fh, SCHEMA_LINE)
    paths = badge_paths(awards)
    with run.open("badge_paths.csv") as fh:
        write_paths_csv(paths, fh, SCHEMA_LINE)
    with run.open("badge_path_anomalies.jsonl") as fh:
        for uid, reason in sorted(paths.anomalies.items()):
            fh.write(json.dumps({"user_id": uid, "reason": reason}, sort_keys=True) + "\n")
    return {"counts": {"lifecycles": len(pop), "path_anomalies": len(paths.anomalies)}}


@command("features")
def cmd_features(run: Run):
    """59-column pre-badge feature matrix with decline labels."""
    from .features import build_feature_matrix, write_features_csv, write_manifest
    from .ingest import read_users_jsonl

    log = _load_events(run)
    awards = read_awards(run.need("awards.jsonl"))
    users = {u.user_id: u for u in read_users_jsonl(str(run.need("users.jsonl")))}
    fm = build_feature_matrix(log, awards, load_group_model(run), run.cfg.cls, users)
    with run.open("features.csv") as fh:
        write_features_csv(fm, fh, SCHEMA_LINE)
    with run.open("feature_manifest.csv", schema=True) as fh:
        write_manifest(fh)
    return {"counts": {"rows": int(fm.X.shape[0]), "positives": int(fm.y.sum()), "rejected": len(fm.rejected)}}


@command("train")
def cmd_train(run: Run):
    """Fit the boosted-tree decline classifier on all feature rows."""
    from .model import GradientBoostedClassifier

    fm = load_features(run)
    model = GradientBoostedClassifier.from_config(run.cfg.model_config()).fit(fm.X, fm.y)
    with run.open("gbdt_model.txt") as fh:
        fh.write(model.dump())
    with run.open("train_loss.csv", schema=True) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "log_loss"])
        for i, v in enumerate(model.train_loss_):
            w.writerow([i, repr(float(v))])
    return {"counts": {"trees": len(model.trees_)}}


@command("evaluate")
def cmd_evaluate(run: Run):
    """Stratified k-fold evaluation on all features."""
    from .evaluation import cross_validate, write_reports_csv

    fm = load_features(run)
    rep = cross_validate(fm.X, fm.y, run.cfg.model_config(), run.cfg.folds, run.cfg.seed)
    with run.open("evaluation.csv") as fh:
        write_reports_csv({"U+E+T": rep}, fh, SCHEMA_LINE)
    return {}


@command("ablate")
def cmd_ablate(run: Run):
    """Evaluation grid over the user / edit / temporal feature blocks."""
    from .evaluation import feature_ablation, write_reports_csv
    from .features import BLOCKS

    fm = load_features(run)
    reps = feature_ablation(fm.X, fm.y, BLOCKS, config=run.cfg.model_config(), folds=run.cfg.folds, seed=run.cfg.seed)
    with run.open("ablation.csv") as fh:
        write_reports_csv(reps, fh, SCHEMA_LINE)
    return {}


REPORT_TABLES = [
    ("group_counts.csv", "table_group_counts.csv"),
    ("steering_curves.csv", "steering_curves.csv"),
    ("transitions.csv", "transition_matrices.csv"),
    ("badge_paths.csv", "badge_paths.csv"),
    ("cooccurrence.csv", "cooccurrence.csv"),
    ("ablation.csv", "evaluation_grid.csv"),
]


@command("report")
def cmd_report(run: Run):
    """Collect the summary tables into report/."""
    srcs = [(run.need(src), dst) for src, dst in REPORT_TABLES]
    for src, dst in srcs:
        shutil.copyfile(src, run.path(f"report/{dst}"))
    return {}


PIPELINE = ["ingest", "profile", "cluster", "steering", "flows", "features", "train", "evaluate", "ablate", "report"]


def main(argv=None):
    cli.main(args=argv, prog_name="badgesteer")


if __name__ == "__main__":  # pragma: no cover
    main()
