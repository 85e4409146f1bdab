"""Page-placement policies deciding which NVM pages move to DRAM.

All policies share the migration threshold controller and the stat store;
they differ only in how they score a page when one of its requests
completes. Scores aggregate over every application's stat entry for the
page, so shared pages are judged by their combined benefit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ubm import StatStore, stall_time_reduction

POLICY_NAMES = ("all", "freq", "rbla", "ubm-st", "ubm")

PROMOTE = "promote"
STAY = "stay"


@dataclass(frozen=True)
class PolicyDecision:
    page_id: int
    action: str
    score: float = 0.0


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "ubm"
    quantum_cycles: int = 1_000_000
    initial_threshold: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.kind!r}; pick one of {POLICY_NAMES}")
        if self.quantum_cycles <= 0:
            raise ValueError("quantum length must be positive")


class PlacementPolicy:
    name = "base"
    uses_threshold = True

    def score(self, page_id: int, store: StatStore, ctx) -> float:
        raise NotImplementedError

    def decide(self, page_id: int, store: StatStore, ctx, threshold: float) -> PolicyDecision:
        s = self.score(page_id, store, ctx)
        action = PROMOTE if s > threshold else STAY
        return PolicyDecision(page_id, action, s)


class AllPolicy(PlacementPolicy):
    """Insert every page touched in NVM, like a conventional cache."""

    name = "all"
    uses_threshold = False

    def score(self, page_id, store, ctx):
        return 1.0

    def decide(self, page_id, store, ctx, threshold):
        return PolicyDecision(page_id, PROMOTE, 1.0)


class FreqPolicy(PlacementPolicy):
    """Promote pages accessed often while NVM-resident."""

    name = "freq"

    def score(self, page_id, store, ctx):
        return float(sum(e.access_count for e in store.entries_for_page(page_id)))


class RblaPolicy(PlacementPolicy):
    """Promote pages with many NVM row-buffer misses."""

    name = "rbla"

    def score(self, page_id, store, ctx):
        return float(sum(e.read_misses + e.write_misses
                         for e in store.entries_for_page(page_id)))


class StallTimePolicy(PlacementPolicy):
    """Promote by estimated stall-time reduction, ignoring sensitivity."""

    name = "ubm-st"

    def score(self, page_id, store, ctx):
        return sum(stall_time_reduction(e, ctx.dram_timing, ctx.nvm_timing)
                   for e in store.entries_for_page(page_id))


class UtilityPolicy(PlacementPolicy):
    """Full utility: stall-time reduction weighted by each application's
    sensitivity, summed across the applications sharing the page."""

    name = "ubm"

    def score(self, page_id, store, ctx):
        return sum(stall_time_reduction(e, ctx.dram_timing, ctx.nvm_timing)
                   * ctx.sensitivity(e.app_id)
                   for e in store.entries_for_page(page_id))


_POLICIES = {
    "all": AllPolicy,
    "freq": FreqPolicy,
    "rbla": RblaPolicy,
    "ubm-st": StallTimePolicy,
    "ubm": UtilityPolicy,
}


def make_policy(kind: str) -> PlacementPolicy:
    try:
        return _POLICIES[kind]()
    except KeyError:
        raise ValueError(f"unknown policy {kind!r}; pick one of {POLICY_NAMES}") from None
