"""User/interaction data: file ingestion, graph construction, ground-truth
matches, holdout splitting, and the biased synthetic market generator.

The directed contact graph is the substrate for everything downstream: for a
user ``x``, ``Se(x)`` is the set of users x contacted and ``Re(x)`` is the set
of users who contacted x.  A *match* is a pair with contacts in both
directions.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class Side(enum.Enum):
    A = "A"
    B = "B"

    @classmethod
    def parse(cls, raw: str) -> "Side":
        try:
            return cls(raw.strip().upper())
        except ValueError:
            raise ValueError(f"side must be 'A' or 'B', got {raw!r}") from None


class DatasetError(ValueError):
    """Base class for ingestion/validation failures."""


class ParseError(DatasetError):
    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class UnknownUserError(DatasetError):
    pass


class SameSideEdgeError(DatasetError):
    pass


@dataclass(frozen=True)
class UserProfile:
    """One side-tagged participant.

    ``attractiveness`` and ``activity`` are latent covariates of the exposure
    bias model; they are populated by the synthetic generator and default to 0
    for file-loaded data that omits them.
    """

    id: str
    side: Side
    group: str
    attributes: tuple[str, ...] = ()
    attractiveness: float = 0.0
    activity: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.attractiveness <= 1.0:
            raise DatasetError(
                f"user {self.id}: attractiveness {self.attractiveness} outside [0, 1]"
            )
        if self.activity < 0.0:
            raise DatasetError(f"user {self.id}: activity {self.activity} < 0")


@dataclass(frozen=True)
class InteractionRecord:
    """A directed contact; ``timestamp`` is a monotone order key only."""

    from_id: str
    to_id: str
    timestamp: int


class InteractionGraph:
    """Immutable directed bipartite contact graph.

    Exposes ``sent(x)`` (= Se(x)) and ``received(x)`` (= Re(x)) as frozensets
    with O(1) lookup.  Safe for unrestricted concurrent reads.
    """

    __slots__ = ("_sent", "_received", "_side", "users_a", "users_b")

    def __init__(self, profiles: Mapping[str, UserProfile], records: Iterable[InteractionRecord]):
        side = {uid: p.side for uid, p in profiles.items()}
        sent: dict[str, set[str]] = {uid: set() for uid in profiles}
        received: dict[str, set[str]] = {uid: set() for uid in profiles}
        for rec in records:
            if rec.from_id not in side:
                raise UnknownUserError(f"interaction references unknown user {rec.from_id!r}")
            if rec.to_id not in side:
                raise UnknownUserError(f"interaction references unknown user {rec.to_id!r}")
            if side[rec.from_id] == side[rec.to_id]:
                raise SameSideEdgeError(
                    f"same-side edge {rec.from_id!r} -> {rec.to_id!r} "
                    f"(both on side {side[rec.from_id].value})"
                )
            sent[rec.from_id].add(rec.to_id)
            received[rec.to_id].add(rec.from_id)
        self._side = side
        self._sent = {uid: frozenset(s) for uid, s in sent.items()}
        self._received = {uid: frozenset(s) for uid, s in received.items()}
        self.users_a = tuple(sorted(uid for uid, s in side.items() if s is Side.A))
        self.users_b = tuple(sorted(uid for uid, s in side.items() if s is Side.B))

    @property
    def n(self) -> int:
        return len(self.users_a)

    @property
    def m(self) -> int:
        return len(self.users_b)

    def side(self, user: str) -> Side:
        return self._side[user]

    def users(self, side: Side) -> tuple[str, ...]:
        return self.users_a if side is Side.A else self.users_b

    def opposite_users(self, user: str) -> tuple[str, ...]:
        return self.users_b if self._side[user] is Side.A else self.users_a

    def sent(self, user: str) -> frozenset[str]:
        """Se(user): everyone this user contacted."""
        return self._sent[user]

    def received(self, user: str) -> frozenset[str]:
        """Re(user): everyone who contacted this user."""
        return self._received[user]

    def edges(self) -> list[tuple[str, str]]:
        """All directed edges, sorted for deterministic iteration."""
        return sorted(
            (u, v) for u in self._sent for v in self._sent[u]
        )

    def edge_count(self) -> int:
        return sum(len(s) for s in self._sent.values())


@dataclass(frozen=True)
class MatchSet:
    """Unordered mutually-contacted (a, b) pairs, each counted once."""

    pairs: frozenset[tuple[str, str]]

    @property
    def size(self) -> int:
        return len(self.pairs)

    def partners_of(self, user: str) -> set[str]:
        out = set()
        for a, b in self.pairs:
            if a == user:
                out.add(b)
            elif b == user:
                out.add(a)
        return out


@dataclass(frozen=True)
class DatasetSplit:
    train: InteractionGraph
    heldout: MatchSet
    split_fraction: float


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the biased synthetic dating market.

    ``alpha``/``beta`` tilt target selection toward attractive/active users
    (softmax exposure model used generatively), ``homophily`` multiplies the
    selection weight by (1 + homophily) on group agreement, and a contacted
    user reciprocates with probability
    ``reciprocation_base * (1 + attractiveness_of_sender) / 2``.
    """

    n: int
    m: int
    group_distribution: Mapping[str, float]
    alpha: float = 0.0
    beta: float = 0.0
    homophily: float = 0.0
    mean_contacts: float = 10.0
    reciprocation_base: float = 0.5
    seed: int = 0
    group_distribution_b: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if self.n < 2 or self.m < 2:
            raise DatasetError(f"need n, m >= 2, got n={self.n}, m={self.m}")
        for dist in (self.group_distribution, self.group_distribution_b):
            if dist is None:
                continue
            total = math.fsum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise DatasetError(f"group probabilities sum to {total}, expected 1")
            if any(p < 0 for p in dist.values()):
                raise DatasetError("group probabilities must be non-negative")
        if not 0.0 <= self.homophily <= 1.0:
            raise DatasetError(f"homophily {self.homophily} outside [0, 1]")
        if not 0.0 < self.reciprocation_base < 1.0:
            raise DatasetError(
                f"reciprocation_base {self.reciprocation_base} outside (0, 1)"
            )
        if self.mean_contacts < 0:
            raise DatasetError(f"mean_contacts {self.mean_contacts} < 0")


# --------------------------------------------------------------------------
# File ingestion
# --------------------------------------------------------------------------

class FileFormat(enum.Enum):
    CSV = "csv"
    JSONL = "jsonl"

    @classmethod
    def infer(cls, path: str | Path) -> "FileFormat":
        suffix = Path(path).suffix.lower()
        if suffix == ".csv":
            return cls.CSV
        if suffix in (".jsonl", ".ndjson"):
            return cls.JSONL
        raise DatasetError(f"cannot infer format from suffix {suffix!r} of {path}")


_PROFILE_FIXED = ("id", "side", "group")
_PROFILE_LATENT = ("attractiveness", "activity")


def _profile_rows(path: str | Path, fmt: FileFormat):
    """Yield (line_number, dict) rows from a profile file."""
    if fmt is FileFormat.CSV:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ParseError(path, 1, "missing header")
            missing = [c for c in _PROFILE_FIXED if c not in reader.fieldnames]
            if missing:
                raise ParseError(path, 1, f"missing required columns {missing}")
            for row in reader:
                yield reader.line_num, row
    else:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(path, lineno, f"invalid JSON: {exc.msg}") from None


def load_profiles(path: str | Path, fmt: FileFormat | None = None) -> dict[str, UserProfile]:
    """Load a profile table keyed by user id.

    CSV header: ``id,side,group,attr1..attrP,attractiveness,activity`` where
    the attr columns and the two latent columns are optional (latents default
    to 0).  JSONL carries the same field names, with ``attributes`` given as a
    list.
    """
    fmt = fmt or FileFormat.infer(path)
    profiles: dict[str, UserProfile] = {}
    attr_cols: list[str] | None = None
    for lineno, row in _profile_rows(path, fmt):
        try:
            uid = str(row["id"])
            side = Side.parse(str(row["side"]))
            group = str(row["group"])
            if fmt is FileFormat.CSV:
                if attr_cols is None:
                    attr_cols = sorted(
                        (c for c in row if c.startswith("attr") and c[4:].isdigit()),
                        key=lambda c: int(c[4:]),
                    )
                attributes = tuple(str(row[c]) for c in attr_cols)
            else:
                attributes = tuple(str(a) for a in row.get("attributes", ()))
            attractiveness = float(row.get("attractiveness") or 0.0)
            activity = float(row.get("activity") or 0.0)
        except KeyError as exc:
            raise ParseError(path, lineno, f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if uid in profiles:
            raise ParseError(path, lineno, f"duplicate user id {uid!r}")
        try:
            profiles[uid] = UserProfile(uid, side, group, attributes, attractiveness, activity)
        except DatasetError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    return profiles


def load_interactions(
    interactions_path: str | Path,
    profiles_path: str | Path,
    fmt: FileFormat | None = None,
) -> tuple[dict[str, UserProfile], list[InteractionRecord]]:
    """Load and validate a dataset from a pair of files.

    Returns the profile table and the interaction records deduplicated to the
    earliest timestamp per (from, to) pair.  Raises :class:`ParseError` with a
    line number on malformed input, :class:`UnknownUserError` on references to
    undeclared users, and :class:`SameSideEdgeError` on intra-side contacts.
    """
    fmt = fmt or FileFormat.infer(interactions_path)
    profiles = load_profiles(profiles_path, fmt)

    earliest: dict[tuple[str, str], int] = {}
    if fmt is FileFormat.CSV:
        rows = _interaction_rows_csv(interactions_path)
    else:
        rows = _interaction_rows_jsonl(interactions_path)
    for lineno, (src, dst, ts) in rows:
        if src not in profiles:
            raise UnknownUserError(f"{interactions_path}:{lineno}: unknown user {src!r}")
        if dst not in profiles:
            raise UnknownUserError(f"{interactions_path}:{lineno}: unknown user {dst!r}")
        if src == dst:
            raise SameSideEdgeError(f"{interactions_path}:{lineno}: self-edge {src!r}")
        if profiles[src].side == profiles[dst].side:
            raise SameSideEdgeError(
                f"{interactions_path}:{lineno}: same-side edge {src!r} -> {dst!r}"
            )
        key = (src, dst)
        if key not in earliest or ts < earliest[key]:
            earliest[key] = ts

    records = [
        InteractionRecord(src, dst, ts)
        for (src, dst), ts in sorted(earliest.items(), key=lambda kv: (kv[1], kv[0]))
    ]
    return profiles, records


def _interaction_rows_csv(path: str | Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(path, 1, "missing header")
        missing = [c for c in ("from", "to", "timestamp") if c not in reader.fieldnames]
        if missing:
            raise ParseError(path, 1, f"missing required columns {missing}")
        for row in reader:
            try:
                yield reader.line_num, (str(row["from"]), str(row["to"]), int(row["timestamp"]))
            except (TypeError, ValueError):
                raise ParseError(
                    path, reader.line_num, f"bad timestamp {row.get('timestamp')!r}"
                ) from None


def _interaction_rows_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc.msg}") from None
            try:
                yield lineno, (str(row["from"]), str(row["to"]), int(row["timestamp"]))
            except KeyError as exc:
                raise ParseError(path, lineno, f"missing field {exc.args[0]!r}") from None
            except (TypeError, ValueError):
                raise ParseError(path, lineno, f"bad timestamp {row.get('timestamp')!r}") from None


def write_dataset(
    profiles: Mapping[str, UserProfile],
    records: Sequence[InteractionRecord],
    profiles_path: str | Path,
    interactions_path: str | Path,
    fmt: FileFormat = FileFormat.CSV,
) -> None:
    """Serialize a dataset in the loadable on-disk layout."""
    n_attrs = max((len(p.attributes) for p in profiles.values()), default=0)
    ordered = [profiles[uid] for uid in sorted(profiles)]
    if fmt is FileFormat.CSV:
        with open(profiles_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            attr_cols = [f"attr{i + 1}" for i in range(n_attrs)]
            writer.writerow(list(_PROFILE_FIXED) + attr_cols + list(_PROFILE_LATENT))
            for p in ordered:
                attrs = list(p.attributes) + [""] * (n_attrs - len(p.attributes))
                writer.writerow(
                    [p.id, p.side.value, p.group, *attrs,
                     repr(p.attractiveness), repr(p.activity)]
                )
        with open(interactions_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["from", "to", "timestamp"])
            for rec in records:
                writer.writerow([rec.from_id, rec.to_id, rec.timestamp])
    else:
        with open(profiles_path, "w", encoding="utf-8") as fh:
            for p in ordered:
                fh.write(json.dumps({
                    "id": p.id, "side": p.side.value, "group": p.group,
                    "attributes": list(p.attributes),
                    "attractiveness": p.attractiveness, "activity": p.activity,
                }, sort_keys=True) + "\n")
        with open(interactions_path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(
                    {"from": rec.from_id, "to": rec.to_id, "timestamp": rec.timestamp},
                    sort_keys=True,
                ) + "\n")


def dataset_digest(
    profiles: Mapping[str, UserProfile], records: Sequence[InteractionRecord]
) -> str:
    """Stable sha256 over the canonical serialization of a dataset."""
    h = hashlib.sha256()
    for uid in sorted(profiles):
        p = profiles[uid]
        h.update(
            f"{p.id}|{p.side.value}|{p.group}|{','.join(p.attributes)}"
            f"|{p.attractiveness!r}|{p.activity!r}\n".encode()
        )
    for rec in sorted(records, key=lambda r: (r.timestamp, r.from_id, r.to_id)):
        h.update(f"{rec.from_id}>{rec.to_id}@{rec.timestamp}\n".encode())
    return h.hexdigest()


# --------------------------------------------------------------------------
# Graph construction and ground truth
# --------------------------------------------------------------------------

def build_graph(
    profiles: Mapping[str, UserProfile], records: Iterable[InteractionRecord]
) -> InteractionGraph:
    """Build the immutable contact graph; Se/Re duality holds by construction."""
    return InteractionGraph(profiles, records)


def derive_matches(graph: InteractionGraph) -> MatchSet:
    """Mutually-contacted pairs, each counted once with the A-side user first."""
    pairs = set()
    for a in graph.users_a:
        for b in graph.sent(a):
            if a in graph.sent(b):
                pairs.add((a, b))
    return MatchSet(frozenset(pairs))


def split_holdout(graph: InteractionGraph, fraction: float, seed: int) -> DatasetSplit:
    """Hold out ``ceil(fraction * M)`` matches, removing BOTH directed edges.

    Holding out only one direction would leak the reciprocal signal into
    training, making held-out prediction trivial.
    """
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"split fraction {fraction} outside (0, 1)")
    matches = derive_matches(graph)
    if matches.size == 0:
        raise DatasetError("graph has no mutual matches to hold out")
    ordered = sorted(matches.pairs)
    k = math.ceil(fraction * len(ordered))
    rng = np.random.default_rng(seed)
    chosen_idx = rng.choice(len(ordered), size=k, replace=False)
    heldout = frozenset(ordered[i] for i in sorted(chosen_idx))

    removed = set()
    for a, b in heldout:
        removed.add((a, b))
        removed.add((b, a))
    profiles_stub = {
        uid: UserProfile(uid, graph.side(uid), "")
        for uid in (*graph.users_a, *graph.users_b)
    }
    kept = [
        InteractionRecord(u, v, 0)
        for u, v in graph.edges()
        if (u, v) not in removed
    ]
    train = InteractionGraph(profiles_stub, kept)
    return DatasetSplit(train=train, heldout=MatchSet(heldout), split_fraction=fraction)


# --------------------------------------------------------------------------
# Synthetic market generator
# --------------------------------------------------------------------------

_STYLES = ("s0", "s1", "s2")


def generate_synthetic(
    config: SyntheticConfig,
) -> tuple[dict[str, UserProfile], list[InteractionRecord]]:
    """Generate a biased bipartite contact market, deterministic given seed.

    Latents: attractiveness ~ Beta(2, 5), activity ~ Exponential(1).  Each
    user emits Poisson(mean_contacts) contacts; the target is drawn from the
    opposite side with weight ``exp(alpha * attractiveness + beta * activity)``
    multiplied by ``(1 + homophily)`` on group agreement.  A contacted user
    reciprocates with probability
    ``clamp(reciprocation_base * (1 + attractiveness_sender) / 2, 0, 1)``.
    """
    rng = np.random.default_rng(config.seed)
    dist_a = dict(config.group_distribution)
    dist_b = dict(config.group_distribution_b or config.group_distribution)

    profiles: dict[str, UserProfile] = {}
    sides: list[tuple[str, tuple[str, ...], Mapping[str, float]]] = [
        ("a", tuple(f"a{i:05d}" for i in range(config.n)), dist_a),
        ("b", tuple(f"b{i:05d}" for i in range(config.m)), dist_b),
    ]
    latents: dict[str, dict[str, np.ndarray]] = {}
    for prefix, ids, dist in sides:
        count = len(ids)
        group_names = sorted(dist)
        probs = np.array([dist[g] for g in group_names])
        groups = rng.choice(group_names, size=count, p=probs / probs.sum())
        attractiveness = rng.beta(2.0, 5.0, size=count)
        activity = rng.exponential(1.0, size=count)
        styles = rng.choice(_STYLES, size=count)
        side = Side.A if prefix == "a" else Side.B
        for i, uid in enumerate(ids):
            profiles[uid] = UserProfile(
                uid, side, str(groups[i]), (str(groups[i]), str(styles[i])),
                float(attractiveness[i]), float(activity[i]),
            )
        latents[prefix] = {
            "ids": np.array(ids),
            "groups": groups,
            "attractiveness": attractiveness,
            "activity": activity,
        }

    records: list[InteractionRecord] = []
    seen: set[tuple[str, str]] = set()
    clock = 0

    # Base softmax selection weights per target side; homophily multiplies
    # on group agreement per sender.
    base_weight = {
        p: np.exp(config.alpha * latents[p]["attractiveness"]
                  + config.beta * latents[p]["activity"])
        for p in ("a", "b")
    }

    sends: list[tuple[str, str]] = []
    for sender_prefix, target_prefix in (("a", "b"), ("b", "a")):
        sender = latents[sender_prefix]
        target = latents[target_prefix]
        target_ids = target["ids"]
        for i, uid in enumerate(sender["ids"]):
            n_contacts = int(rng.poisson(config.mean_contacts))
            if n_contacts == 0:
                continue
            weights = base_weight[target_prefix].copy()
            if config.homophily > 0.0:
                weights = weights * np.where(
                    target["groups"] == sender["groups"][i], 1.0 + config.homophily, 1.0
                )
            probs = weights / weights.sum()
            picks = rng.choice(len(target_ids), size=n_contacts, replace=True, p=probs)
            for j in picks:
                pair = (str(uid), str(target_ids[j]))
                if pair in seen:
                    continue
                seen.add(pair)
                records.append(InteractionRecord(pair[0], pair[1], clock))
                sends.append(pair)
                clock += 1

    # Reciprocation pass over the send stream in timestamp order.
    for src, dst in sends:
        p_back = config.reciprocation_base * (1.0 + profiles[src].attractiveness) / 2.0
        p_back = min(max(p_back, 0.0), 1.0)
        if rng.random() < p_back:
            pair = (dst, src)
            if pair not in seen:
                seen.add(pair)
                records.append(InteractionRecord(dst, src, clock))
                clock += 1

    return profiles, records
