"""Stream quality tiers and the bandwidth allocation policy.

One tutor watches n student feeds under a shared downlink budget. The
policy is deliberately a total function: every (feeds, zoomed, budget)
input yields an assignment, flagged over_budget when even the floor
plan does not fit, rather than failing.

Degradation is staged. Starting from the ideal (zoomed feed High,
everything else Low), the allocator walks a fixed sequence of
strictly-cheaper plans and stops at the first one that fits:

  stage 0           zoomed High, others Low
  stage 1           zoomed Mid, others Low
  stage 1 + k       zoomed Mid, the k lowest PeerIds of the others
                    Frozen, the rest Low        (k = 1 .. n-1)
  final             zoomed Mid, all others Frozen; if that still does
                    not fit it is returned with over_budget=True

Without a zoomed feed the walk is: all Low, then freeze the lowest
PeerIds one at a time, ending at all Frozen. Freezing by ascending
PeerId is arbitrary but deterministic, so repeated calls with the same
roster degrade the same students instead of flapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import ZoomTargetNotInFeeds
from .protocol import TIER_NAMES


@dataclass(frozen=True)
class Tier:
    name: str
    width: int
    height: int
    bitrate_kbps: int
    frame_interval_ms: Optional[int] = None

    def to_params(self) -> dict:
        p = {"width": self.width, "height": self.height,
             "bitrate_kbps": self.bitrate_kbps}
        if self.frame_interval_ms is not None:
            p["frame_interval_ms"] = self.frame_interval_ms
        return p


# Frozen is a still snapshot every 5 s; it reuses the Low resolution.
DEFAULT_TIERS: dict[str, Tier] = {
    "High": Tier("High", 1280, 720, 1500),
    "Mid": Tier("Mid", 640, 360, 400),
    "Low": Tier("Low", 320, 180, 150),
    "Frozen": Tier("Frozen", 320, 180, 10, frame_interval_ms=5000),
}

_RANK = {name: i for i, name in enumerate(reversed(TIER_NAMES))}


def tier_rank(name: str) -> int:
    """Frozen=0, Low=1, Mid=2, High=3."""
    return _RANK[name]


def validate_tier_table(tiers: Mapping[str, Tier]) -> None:
    """Reject tables missing a tier or with non-descending bitrates."""
    for name in TIER_NAMES:
        if name not in tiers:
            raise ValueError(f"tier table missing {name!r}")
        if tiers[name].name != name:
            raise ValueError(f"tier {name!r} has mismatched name field")
    ordered = [tiers[n].bitrate_kbps for n in TIER_NAMES]
    if not all(a > b for a, b in zip(ordered, ordered[1:])):
        raise ValueError("tier bitrates must strictly decrease High>Mid>Low>Frozen")


@dataclass(frozen=True)
class StreamAllocation:
    assignments: dict  # PeerId -> tier name, in feed order
    total_kbps: int
    over_budget: bool


def _plan_total(tiers: Mapping[str, Tier], zoom_tier: Optional[str],
                n_rest: int, frozen_count: int) -> int:
    total = tiers[zoom_tier].bitrate_kbps if zoom_tier else 0
    total += frozen_count * tiers["Frozen"].bitrate_kbps
    total += (n_rest - frozen_count) * tiers["Low"].bitrate_kbps
    return total


def allocate(feeds: Sequence[str], zoomed: Optional[str], budget_kbps: int,
             tiers: Mapping[str, Tier] = DEFAULT_TIERS) -> StreamAllocation:
    """Assign a tier to every feed under budget_kbps.

    feeds is the roster's student PeerIds (order preserved in the
    result); zoomed, if given, must be one of them. budget_kbps <= 0
    means nothing fits and everything lands on the floor plan.
    """
    validate_tier_table(tiers)
    if len(set(feeds)) != len(feeds):
        raise ValueError("duplicate peer in feeds")
    if zoomed is not None and zoomed not in feeds:
        raise ZoomTargetNotInFeeds(f"{zoomed!r} is not an active feed")
    if not feeds:
        return StreamAllocation({}, 0, False)

    rest = sorted(p for p in feeds if p != zoomed)
    plans: list[tuple[Optional[str], int]] = []  # (zoom tier, frozen count)
    if zoomed is not None:
        plans.append(("High", 0))
        for k in range(0, len(rest) + 1):
            plans.append(("Mid", k))
    else:
        for k in range(0, len(rest) + 1):
            plans.append((None, k))

    chosen = plans[-1]
    over = True
    for plan in plans:
        if _plan_total(tiers, plan[0], len(rest), plan[1]) <= budget_kbps:
            chosen = plan
            over = False
            break

    zoom_tier, frozen_count = chosen
    frozen = set(rest[:frozen_count])
    assignments = {}
    for p in feeds:
        if p == zoomed:
            assignments[p] = zoom_tier
        elif p in frozen:
            assignments[p] = "Frozen"
        else:
            assignments[p] = "Low"
    total = sum(tiers[t].bitrate_kbps for t in assignments.values())
    return StreamAllocation(assignments, total, over)
