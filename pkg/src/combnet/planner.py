"""Channel-pair allocation and delay scheduling for fully connected networks.

Every unordered user pair gets one conjugate channel pair (signal above the
pump, idler mirrored below). Pairs are consumed outward from the pump, and
edges are filled in lexicographic user-pair order, so the allocation is
deterministic. Per-channel fiber delays then make each user pair
identifiable by the signed arrival-time offset of its photons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import CapacityError, ConfigurationError
from .grid import Channel

DEFAULT_USER_NAMES = ("Alice", "Bob", "Chloe", "Dave", "Erin", "Fiona", "Grace", "Heidi")


@dataclass(frozen=True, order=True)
class UserId:
    index: int
    label: str = ""

    def display(self) -> str:
        return self.label or f"User{self.index}"


@dataclass(frozen=True)
class EdgeAssignment:
    """Conjugate channel pair serving one user pair.

    The signal (higher-index) channel is delivered to ``user_a``, the
    lower-indexed user; the idler goes to ``user_b``.
    """

    user_a: UserId
    user_b: UserId
    signal_channel: Channel
    idler_channel: Channel

    def channel_for(self, user: UserId) -> Channel:
        if user == self.user_a:
            return self.signal_channel
        if user == self.user_b:
            return self.idler_channel
        raise KeyError(f"{user.display()} is not on this edge")

    def key(self) -> tuple[int, int]:
        return (self.user_a.index, self.user_b.index)

    def name(self) -> str:
        return f"{self.user_a.display()}-{self.user_b.display()}"


@dataclass(frozen=True)
class NetworkPlan:
    users: list[UserId]
    edges: list[EdgeAssignment]
    pump: Channel
    excluded_channels: frozenset[Channel] = field(default_factory=frozenset)

    def edges_of(self, user: UserId) -> list[EdgeAssignment]:
        return [e for e in self.edges if user in (e.user_a, e.user_b)]

    def channels_of(self, user: UserId) -> list[Channel]:
        return [e.channel_for(user) for e in self.edges_of(user)]

    def all_channels(self) -> list[Channel]:
        out = []
        for e in self.edges:
            out.extend((e.signal_channel, e.idler_channel))
        return out


@dataclass(frozen=True)
class DelaySchedule:
    delay_by_channel: dict[Channel, float]  # ns
    identification_window_ns: float

    def edge_offset_ns(self, edge: EdgeAssignment) -> float:
        """Signed arrival offset signature: delay(signal) - delay(idler)."""
        return (
            self.delay_by_channel[edge.signal_channel]
            - self.delay_by_channel[edge.idler_channel]
        )


def default_users(n_users: int) -> list[UserId]:
    return [
        UserId(i, DEFAULT_USER_NAMES[i] if i < len(DEFAULT_USER_NAMES) else f"User{i}")
        for i in range(n_users)
    ]


def max_users(channel_count: int) -> int:
    """Largest n with n(n-1) <= channel_count (each user pair needs 2 channels)."""
    if channel_count < 2:
        raise ConfigurationError("need at least 2 channels")
    n = 2
    while (n + 1) * n <= channel_count:
        n += 1
    return n


def plan_network(
    n_users: int,
    pump: Channel,
    available: list[Channel],
    exclusions: frozenset[Channel] | set[Channel] = frozenset(),
    users: list[UserId] | None = None,
) -> NetworkPlan:
    """Allocate conjugate channel pairs to every edge of K_n.

    Conjugate pairs are taken in increasing offset from the pump; an offset
    is usable only when both of its channels survive the exclusion set.
    Edge (u, v) with u.index < v.index delivers the signal channel to u.
    """
    if n_users < 2:
        raise ConfigurationError("a network needs at least 2 users")
    exclusions = frozenset(exclusions)
    effective = {c for c in available if c not in exclusions}
    if pump in effective:
        raise ConfigurationError(
            f"pump {pump} must not be in the usable channel set"
        )

    needed = n_users * (n_users - 1) // 2
    pairs: list[tuple[Channel, Channel]] = []
    max_offset = max(
        (abs(c.index - pump.index) for c in effective), default=0
    )
    for d in range(1, max_offset + 1):
        try:
            sig = Channel(pump.index + d)
            idl = Channel(pump.index - d)
        except Exception:
            break
        if sig in effective and idl in effective:
            pairs.append((sig, idl))
        if len(pairs) == needed:
            break
    if len(pairs) < needed:
        raise CapacityError(
            f"need {needed} conjugate channel pairs for {n_users} users, "
            f"only {len(pairs)} available (short {needed - len(pairs)})"
        )

    if users is None:
        users = default_users(n_users)
    elif len(users) != n_users:
        raise ConfigurationError("users list length must equal n_users")

    edges = []
    k = 0
    for i in range(n_users):
        for j in range(i + 1, n_users):
            sig, idl = pairs[k]
            edges.append(EdgeAssignment(users[i], users[j], sig, idl))
            k += 1
    return NetworkPlan(
        users=list(users), edges=edges, pump=pump, excluded_channels=exclusions
    )


def assign_delays(
    plan: NetworkPlan, base_step_ns: float, window_ns: float
) -> DelaySchedule:
    """Greedy per-channel delay assignment.

    Channels in index order take successive multiples of ``base_step_ns``,
    skipping any multiple that would leave two of one user's edges with
    arrival offsets closer than ``window_ns``.
    """
    if base_step_ns < 2.0 * window_ns:
        raise ConfigurationError(
            f"base_step {base_step_ns} ns must be >= 2x window {window_ns} ns"
        )
    channels = sorted(set(plan.all_channels()))
    delays: dict[Channel, float] = {}

    def violates(candidate: dict[Channel, float]) -> bool:
        for user in plan.users:
            offsets = []
            for e in plan.edges_of(user):
                if e.signal_channel in candidate and e.idler_channel in candidate:
                    offsets.append(
                        candidate[e.signal_channel] - candidate[e.idler_channel]
                    )
            offsets.sort()
            for a, b in zip(offsets, offsets[1:]):
                if b - a < window_ns:
                    return True
        return False

    next_k = 0
    for chan in channels:
        k = next_k
        while True:
            trial = dict(delays)
            trial[chan] = k * base_step_ns
            if not violates(trial):
                break
            k += 1
        delays[chan] = k * base_step_ns
        next_k = k + 1
    return DelaySchedule(delay_by_channel=delays, identification_window_ns=window_ns)


def verify_plan(
    plan: NetworkPlan, schedule: DelaySchedule | None = None
) -> list[str]:
    """All invariant violations in ``plan`` (and ``schedule`` if given).

    Empty list means the plan is consistent.
    """
    problems: list[str] = []
    n = len(plan.users)

    indices = [u.index for u in plan.users]
    if len(set(indices)) != n:
        problems.append("duplicate user indices")

    expected_edges = n * (n - 1) // 2
    if len(plan.edges) != expected_edges:
        problems.append(
            f"expected {expected_edges} edges for {n} users, found {len(plan.edges)}"
        )
    seen_pairs = set()
    for e in plan.edges:
        if e.user_a.index >= e.user_b.index:
            problems.append(f"edge {e.name()} not ordered by user index")
        if e.key() in seen_pairs:
            problems.append(f"duplicate edge: {e.name()}")
        seen_pairs.add(e.key())

    counts: dict[Channel, int] = {}
    for c in plan.all_channels():
        counts[c] = counts.get(c, 0) + 1
    for c, k in sorted(counts.items()):
        if k > 1:
            problems.append(f"channel reuse: {c}")
        if c in plan.excluded_channels:
            problems.append(f"excluded channel used: {c}")

    for e in plan.edges:
        if e.signal_channel.index + e.idler_channel.index != 2 * plan.pump.index:
            problems.append(f"edge {e.name()} not conjugate about pump {plan.pump}")
        if not (e.signal_channel.index > plan.pump.index > e.idler_channel.index):
            problems.append(f"edge {e.name()} channels not bracketing the pump")

    for u in plan.users:
        chans = plan.channels_of(u)
        if len(set(chans)) != n - 1:
            problems.append(
                f"user {u.display()} receives {len(set(chans))} distinct channels, "
                f"expected {n - 1}"
            )

    if schedule is not None:
        for c in sorted(counts):
            if c not in schedule.delay_by_channel:
                problems.append(f"missing delay for {c}")
        for u in plan.users:
            offsets = []
            for e in plan.edges_of(u):
                if (
                    e.signal_channel in schedule.delay_by_channel
                    and e.idler_channel in schedule.delay_by_channel
                ):
                    offsets.append(schedule.edge_offset_ns(e))
            offsets.sort()
            for a, b in zip(offsets, offsets[1:]):
                if b - a < schedule.identification_window_ns:
                    problems.append(
                        f"ambiguous arrival signature for user {u.display()}"
                    )
                    break
    return problems


def plan_to_dict(plan: NetworkPlan, schedule: DelaySchedule | None = None) -> dict:
    doc = {
        "pump": plan.pump.index,
        "users": [{"index": u.index, "label": u.label} for u in plan.users],
        "excluded_channels": sorted(c.index for c in plan.excluded_channels),
        "edges": [
            {
                "user_a": e.user_a.index,
                "user_b": e.user_b.index,
                "signal_channel": e.signal_channel.index,
                "idler_channel": e.idler_channel.index,
            }
            for e in plan.edges
        ],
    }
    if schedule is not None:
        doc["delays_ns"] = {
            str(c.index): schedule.delay_by_channel[c]
            for c in sorted(schedule.delay_by_channel)
        }
        doc["identification_window_ns"] = schedule.identification_window_ns
    return doc


def plan_from_dict(doc: dict) -> tuple[NetworkPlan, DelaySchedule | None]:
    users = [UserId(u["index"], u["label"]) for u in doc["users"]]
    by_index = {u.index: u for u in users}
    edges = [
        EdgeAssignment(
            by_index[e["user_a"]],
            by_index[e["user_b"]],
            Channel(e["signal_channel"]),
            Channel(e["idler_channel"]),
        )
        for e in doc["edges"]
    ]
    plan = NetworkPlan(
        users=users,
        edges=edges,
        pump=Channel(doc["pump"]),
        excluded_channels=frozenset(Channel(i) for i in doc["excluded_channels"]),
    )
    schedule = None
    if "delays_ns" in doc:
        schedule = DelaySchedule(
            delay_by_channel={
                Channel(int(k)): v for k, v in doc["delays_ns"].items()
            },
            identification_window_ns=doc["identification_window_ns"],
        )
    return plan, schedule


def plan_to_json(plan: NetworkPlan, schedule: DelaySchedule | None = None) -> str:
    return json.dumps(plan_to_dict(plan, schedule), indent=2, sort_keys=True)


def format_allocation_table(
    plan: NetworkPlan, schedule: DelaySchedule | None = None
) -> str:
    """Human-readable allocation table (user pair, channel pair, offset)."""
    rows = [("User", "ITU Channels", "Offset (ns)")]
    for e in plan.edges:
        offset = ""
        if schedule is not None:
            offset = f"{schedule.edge_offset_ns(e):+.2f}"
        rows.append(
            (
                f"{e.user_a.display()} & {e.user_b.display()}",
                f"{e.signal_channel}-{e.idler_channel}",
                offset,
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = []
    for r in rows:
        lines.append("  ".join(col.ljust(w) for col, w in zip(r, widths)).rstrip())
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)
