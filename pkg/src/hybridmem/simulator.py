"""The cycle-level simulation engine.

Binds the cores, the two channel controllers, the migration engine and the
placement policy into one event-driven loop. Events carry an explicit
within-cycle priority so a cycle always unfolds as: completions, queue
injections, core dispatches, then a service phase (parked-request retries,
migration pumping, one command issue per channel), then quantum
bookkeeping. MLP sampling runs on a fixed period and is batched across
event gaps, which is exact because outstanding-request state only changes
at events.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from . import ubm
from .controller import (
    BLOCK_BYTES, BUFFER_CHANNEL, ChannelController, ControllerConfig,
    DRAM_CHANNEL, MemRequest, NVM_CHANNEL, SYSTEM_APP,
)
from .core import AppCore
from .device import (
    DRAM_BASELINE, NVM_BASELINE, DevTiming, DeviceGeometry, EnergyMeter,
    READ, WRITE,
)
from .migration import MigrationEngine, TagStore
from .policies import PROMOTE, make_policy
from .ubm import HotPageCounters, StatStore, ThresholdController

# Event priorities (within one cycle).
_EV_COMPLETE = 0
_EV_INJECT = 1
_EV_CORE = 2
_EV_PHASE = 3
_EV_QUANTUM = 4


@dataclass(frozen=True)
class SimConfig:
    dram_timing: DevTiming = DRAM_BASELINE
    nvm_timing: DevTiming = NVM_BASELINE
    dram_geometry: DeviceGeometry = DeviceGeometry(512 << 20)
    nvm_geometry: DeviceGeometry = DeviceGeometry(16 << 30)
    controller: ControllerConfig = ControllerConfig()
    policy: str = "ubm"
    quantum_cycles: int = 1_000_000
    sampling_period: int = 30
    lookup_cycles: int = 6
    buffer_service_cycles: int = 1
    rob_capacity: int = 128
    mshr_capacity: int = 32
    block_bytes: int = BLOCK_BYTES
    tag_associativity: int = 16
    stat_sets: int = 64
    stat_ways: int = 32
    max_migrations: int = 4
    migration_queue: int = 8
    migration_inflight_blocks: int = 8
    migration_enabled: bool = True
    stat_decay: bool = False
    warmup_instructions: int = 0
    measured_instructions: int = 1_000_000
    preload_dram_pages: tuple = ()
    max_cycles: int | None = None
    collect_quantum_log: bool = False

    def validate(self):
        if self.quantum_cycles <= 0 or self.sampling_period <= 0:
            raise ValueError("quantum and sampling period must be positive")
        if self.warmup_instructions + self.measured_instructions <= 0:
            raise ValueError("warmup + measured instructions must be positive")
        if self.measured_instructions <= 0:
            raise ValueError("measured instructions must be positive")
        if self.dram_geometry.page_bytes != self.nvm_geometry.page_bytes:
            raise ValueError("DRAM and NVM must share the page size")


class Simulation:
    """One deterministic simulation instance over a fixed set of traces."""

    def __init__(self, config: SimConfig, traces):
        config.validate()
        self.config = config
        self.page_bytes = config.dram_geometry.page_bytes
        self.block_bytes = config.block_bytes
        self.blocks_per_page = self.page_bytes // self.block_bytes

        self.cycle = 0
        self._heap = []
        self._seq = 0
        self.finished = False

        self.dram_energy = EnergyMeter(config.dram_timing, config.dram_geometry)
        self.nvm_energy = EnergyMeter(config.nvm_timing, config.nvm_geometry)
        self.controllers = [
            ChannelController(DRAM_CHANNEL, config.dram_timing,
                              config.dram_geometry, config.controller,
                              self.dram_energy),
            ChannelController(NVM_CHANNEL, config.nvm_timing,
                              config.nvm_geometry, config.controller,
                              self.nvm_energy),
        ]
        self.tag = TagStore(config.dram_geometry.pages, config.tag_associativity)
        self.engine = MigrationEngine(
            self, self.tag, self.blocks_per_page,
            max_jobs=config.max_migrations,
            pending_capacity=config.migration_queue,
            inflight_blocks=config.migration_inflight_blocks,
        )
        for page in config.preload_dram_pages:
            if not self.tag.has_free_way(page):
                raise ValueError(f"preloaded page {page} overflows its DRAM set")
            self.tag.reserve(page)
            self.tag.finalize(page)

        self.store = StatStore(config.stat_sets, config.stat_ways)
        self.hot = HotPageCounters()
        self.policy = make_policy(config.policy)
        self.threshold = ThresholdController()

        self.cores = [
            AppCore(self, i, tr, config.rob_capacity, config.mshr_capacity,
                    config.warmup_instructions, config.measured_instructions)
            for i, tr in enumerate(traces)
        ]
        n = len(self.cores)
        self.n_read_out = [0] * n
        self.n_write_out = [0] * n
        self._delay_anchor = [None] * n
        self.q_delay = [0] * n
        self.t_delay = [0] * n
        self.q_interference = [0] * n    # sum of per-request blocked shares
        self.t_interference = [0] * n
        self.q_outstanding = [0] * n     # sum of per-request lifetimes
        self.t_outstanding = [0] * n
        self.app_reads = [0] * n
        self.app_writes = [0] * n
        self.app_row_hits = [0] * n
        self.app_row_misses = [0] * n
        self.speedup_est = [1.0] * n      # previous-quantum estimate, quantized
        self._marker_snaps = [{} for _ in range(n)]
        self._done_count = 0

        self.page_stall = {}              # page -> attributed stall cycles
        self.quantum_log = []
        self.quantum_index = 0

        self._next_req_id = 0
        self._phase_cycle = -1
        self._next_sample = config.sampling_period
        self._parked = 0

        self._push(config.quantum_cycles, _EV_QUANTUM, None)
        for core in self.cores:
            core.run_to(0)

    # -- scheduling primitives --------------------------------------------

    def _push(self, cycle: int, prio: int, payload):
        self._seq += 1
        heapq.heappush(self._heap, (cycle, prio, self._seq, payload))

    def schedule_core(self, core: AppCore, cycle: int):
        cycle = max(cycle, self.cycle)
        # Keep only the earliest pending wake per core; later duplicates are
        # re-derived when that wake fires.
        if core.next_wake is not None and core.next_wake <= cycle:
            return
        core.next_wake = cycle
        self._push(cycle, _EV_CORE, core)

    def _ensure_phase(self, cycle: int):
        if self._phase_cycle != cycle:
            self._phase_cycle = cycle
            self._push(cycle, _EV_PHASE, None)

    # -- sensitivity interface for the policy ------------------------------

    @property
    def dram_timing(self):
        return self.config.dram_timing

    @property
    def nvm_timing(self):
        return self.config.nvm_timing

    def sensitivity(self, app_id: int) -> float:
        return ubm.sensitivity(self.speedup_est[app_id], self.config.quantum_cycles)

    # -- core callbacks -----------------------------------------------------

    def dispatch(self, core: AppCore, addr: int, kind: int, cycle: int) -> MemRequest:
        self._next_req_id += 1
        req = MemRequest(self._next_req_id, core.app_id, addr // self.page_bytes, kind)
        req.mig_block = (addr % self.page_bytes) // self.block_bytes
        req.dispatch_cycle = cycle
        app = core.app_id
        before = self.n_read_out[app] + self.n_write_out[app]
        if kind == READ:
            self.n_read_out[app] += 1
        else:
            self.n_write_out[app] += 1
        if before == 0:
            self._delay_anchor[app] = cycle
        self._push(cycle + self.config.lookup_cycles, _EV_INJECT, req)
        return req

    def on_stall(self, core: AppCore, page: int, span: int):
        if page >= 0:
            self.page_stall[page] = self.page_stall.get(page, 0) + span

    def on_app_marker(self, core: AppCore, which: str, marker_cycle: int):
        snap = {
            "cycle": marker_cycle,
            "t_stall": core.t_stall,
            "t_delay": self.t_delay[core.app_id],
            "t_interference": self.t_interference[core.app_id],
            "t_outstanding": self.t_outstanding[core.app_id],
            "reads": self.app_reads[core.app_id],
            "writes": self.app_writes[core.app_id],
            "row_hits": self.app_row_hits[core.app_id],
            "row_misses": self.app_row_misses[core.app_id],
        }
        self._marker_snaps[core.app_id][which] = snap
        if which == "done":
            self._done_count += 1
            if self._done_count == len(self.cores):
                self.finished = True

    # -- request flow -------------------------------------------------------

    def _route(self, req: MemRequest):
        loc = self.engine.lookup(req.page_id)
        if loc == "dram":
            return DRAM_CHANNEL
        if loc == "nvm":
            return NVM_CHANNEL
        return loc.location(req.page_id, req.mig_block,
                            DRAM_CHANNEL, NVM_CHANNEL, BUFFER_CHANNEL)

    def _inject(self, req: MemRequest, cycle: int) -> bool:
        channel = self._route(req)
        req.channel = channel
        if channel == BUFFER_CHANNEL:
            req.arrival_cycle = cycle
            req.issue_cycle = cycle
            req.completion_cycle = cycle + self.config.buffer_service_cycles
            self._push(req.completion_cycle, _EV_COMPLETE, req)
            return True
        ctrl = self.controllers[channel]
        req.bank_id = req.page_id % ctrl.geometry.banks
        if not ctrl.enqueue(req, cycle):
            return False
        if channel == NVM_CHANNEL and req.is_demand:
            self.hot.on_inject(req.page_id, req.app_id, req.kind == WRITE)
        elif channel == DRAM_CHANNEL and req.is_demand \
                and self.tag.resident(req.page_id):
            self.tag.touch(req.page_id)
        self._ensure_phase(cycle)
        return True

    def _arrive(self, req: MemRequest, cycle: int):
        core = self.cores[req.app_id]
        if core.pending_inject or not self._inject(req, cycle):
            core.pending_inject.append(req)
            self._parked += 1
            core.run_to(cycle)   # a gated pipeline may begin stalling here

    def _retry_parked(self, cycle: int):
        for core in self.cores:
            pend = core.pending_inject
            progressed = False
            while pend and self._inject(pend[0], cycle):
                pend.popleft()
                self._parked -= 1
                progressed = True
            if progressed:
                core.run_to(cycle)

    def inject_migration(self, job, kind: int, page: int, block: int,
                         channel: int, cycle: int):
        ctrl = self.controllers[channel]
        if kind == READ:
            if not ctrl.has_read_space(demand=False):
                return None
        elif not ctrl.has_write_space(demand=False):
            return None
        self._next_req_id += 1
        req = MemRequest(self._next_req_id, SYSTEM_APP, page, kind, is_demand=False)
        req.mig_job = job
        req.mig_block = block
        req.channel = channel
        req.bank_id = page % ctrl.geometry.banks
        req.dispatch_cycle = cycle
        ctrl.enqueue(req, cycle)
        self._ensure_phase(cycle)
        return req

    def _complete(self, req: MemRequest, cycle: int):
        if req.channel != BUFFER_CHANNEL:
            self.controllers[req.channel].on_complete(req)
        if not req.is_demand:
            job = req.mig_job
            if req.kind == READ:
                self.engine.finish_block_read(job, req.mig_block, cycle)
            else:
                self.engine.finish_block_write(job, req.mig_block, cycle)
            self._ensure_phase(cycle)
            return
        app = req.app_id
        core = self.cores[app]
        if req.kind == READ:
            self.n_read_out[app] -= 1
            core.on_read_complete(req, cycle)
        else:
            req.done = True
            self.n_write_out[app] -= 1
        if self.n_read_out[app] + self.n_write_out[app] == 0:
            anchor = self._delay_anchor[app]
            if anchor is not None:
                span = cycle - anchor
                self.q_delay[app] += span
                self.t_delay[app] += span
                self._delay_anchor[app] = None
        self.q_interference[app] += req.interference_delay
        self.t_interference[app] += req.interference_delay
        self.q_outstanding[app] += cycle - req.dispatch_cycle
        self.t_outstanding[app] += cycle - req.dispatch_cycle
        if req.channel == NVM_CHANNEL:
            self.hot.on_complete(req.page_id, app, req.kind == WRITE, self.store)
            self._maybe_migrate(req.page_id, cycle)
        self._ensure_phase(cycle)

    def _maybe_migrate(self, page: int, cycle: int):
        if not self.config.migration_enabled:
            return
        if page in self.engine.migrating or self.tag.resident(page):
            return
        decision = self.policy.decide(page, self.store, self,
                                      self.threshold.threshold)
        if self.policy.uses_threshold:
            self.threshold.observe_score(decision.score)
        if decision.action == PROMOTE:
            self.engine.request_promotion(page, cycle)

    def on_issue(self, req: MemRequest):
        if not req.is_demand:
            return
        app = req.app_id
        if req.kind == READ:
            self.app_reads[app] += 1
        else:
            self.app_writes[app] += 1
        hit = req.outcome == 0
        if hit:
            self.app_row_hits[app] += 1
        else:
            self.app_row_misses[app] += 1
        if req.channel == NVM_CHANNEL:
            entry = self.store.get_or_alloc(req.page_id, app)
            entry.count_access()
            if not hit:
                entry.count_miss(req.kind == WRITE)

    def on_promotion_done(self, page: int, cycle: int):
        self.store.invalidate_page(page)

    def on_eviction_done(self, page: int, cycle: int):
        self.store.invalidate_page(page)

    # -- periodic work --------------------------------------------------------

    def _catch_up_samples(self, up_to: int):
        """Fire sampling ticks in (last, up_to); state is frozen in gaps."""
        first = self._next_sample
        if first >= up_to:
            return
        period = self.config.sampling_period
        ticks = (up_to - 1 - first) // period + 1
        self._next_sample = first + ticks * period
        if self.hot.entries:
            self.hot.sample(self.n_read_out, self.n_write_out, count=ticks)

    def _end_quantum(self, cycle: int):
        q = self.config.quantum_cycles
        total_stall = 0
        speedups = []
        for i, core in enumerate(self.cores):
            core.advance(cycle)
            core.settle_open_spans()
            anchor = self._delay_anchor[i]
            if anchor is not None and cycle > anchor:
                span = cycle - anchor
                self.q_delay[i] += span
                self.t_delay[i] += span
                self._delay_anchor[i] = cycle
            # Per-request blocked shares double-count parallel waits; rescale
            # by the request-cycle integral so the interfered fraction of
            # T_delay is concurrency-weighted and never exceeds T_delay.
            if self.q_outstanding[i] > 0:
                frac = self.q_interference[i] / self.q_outstanding[i]
                t_int = min(self.q_delay[i], int(frac * self.q_delay[i]))
            else:
                t_int = 0
            s = ubm.estimate_speedup(core.q_stall, t_int, self.q_delay[i], q)
            self.speedup_est[i] = ubm.quantize_speedup(s)
            speedups.append(self.speedup_est[i])
            total_stall += core.q_stall
        if self.policy.uses_threshold:
            self.threshold.end_quantum(total_stall)
        if self.config.stat_decay:
            self.store.halve_all()
        if self.config.collect_quantum_log:
            self.quantum_log.append({
                "quantum": self.quantum_index,
                "cycle": cycle,
                "total_stall": total_stall,
                "threshold": self.threshold.threshold,
                "speedups": list(speedups),
                "dram": self.controllers[DRAM_CHANNEL].stats_snapshot(),
                "nvm": self.controllers[NVM_CHANNEL].stats_snapshot(),
                "pages_promoted": self.engine.pages_promoted,
                "pages_evicted": self.engine.pages_evicted,
            })
        for i, core in enumerate(self.cores):
            core.q_stall = 0
            self.q_delay[i] = 0
            self.q_interference[i] = 0
            self.q_outstanding[i] = 0
        self.quantum_index += 1
        self._push(cycle + q, _EV_QUANTUM, None)

    def _phase(self, cycle: int):
        if self._parked:
            self._retry_parked(cycle)
        if self.engine.jobs or self.engine.pending:
            self.engine.pump(cycle)
        issued = False
        for ctrl in self.controllers:
            req = ctrl.try_issue(cycle)
            if req is not None:
                issued = True
                self.on_issue(req)
                self._push(req.completion_cycle, _EV_COMPLETE, req)
        if issued and (self.controllers[0].pending_work()
                       or self.controllers[1].pending_work()):
            self._ensure_phase(cycle + 1)

    # -- main loop --------------------------------------------------------

    def run(self):
        heap = self._heap
        max_cycles = self.config.max_cycles
        while heap and not self.finished:
            t = heap[0][0]
            if max_cycles is not None and t > max_cycles:
                break
            self._catch_up_samples(t)
            self.cycle = t
            while heap and heap[0][0] == t:
                _, prio, _, payload = heapq.heappop(heap)
                if prio == _EV_COMPLETE:
                    self._complete(payload, t)
                elif prio == _EV_INJECT:
                    self._arrive(payload, t)
                elif prio == _EV_CORE:
                    if payload.next_wake is not None and payload.next_wake <= t:
                        payload.next_wake = None
                    payload.run_to(t)
                elif prio == _EV_PHASE:
                    self._phase(t)
                else:
                    self._end_quantum(t)
                if self.finished:
                    break
        self._catch_up_samples(self.cycle + 1)
        for i, core in enumerate(self.cores):
            core.advance(self.cycle)
            core.settle_open_spans()
            anchor = self._delay_anchor[i]
            if anchor is not None and self.cycle > anchor:
                span = self.cycle - anchor
                self.q_delay[i] += span
                self.t_delay[i] += span
                self._delay_anchor[i] = self.cycle
        return self

    # -- results ----------------------------------------------------------

    def measured_window(self, app_id: int) -> dict:
        """Counter deltas between the warmup and completion markers."""
        snaps = self._marker_snaps[app_id]
        if "warm" not in snaps:
            snaps["warm"] = {k: 0 for k in ("cycle", "t_stall", "t_delay",
                                            "t_interference", "t_outstanding",
                                            "reads", "writes",
                                            "row_hits", "row_misses")}
        warm = snaps["warm"]
        done = snaps.get("done") or {
            "cycle": self.cycle,
            "t_stall": self.cores[app_id].t_stall,
            "t_delay": self.t_delay[app_id],
            "t_interference": self.t_interference[app_id],
            "t_outstanding": self.t_outstanding[app_id],
            "reads": self.app_reads[app_id],
            "writes": self.app_writes[app_id],
            "row_hits": self.app_row_hits[app_id],
            "row_misses": self.app_row_misses[app_id],
        }
        win = {k: done[k] - warm[k] for k in warm}
        # Blocked-share sums double-count parallel waits; report the
        # concurrency-weighted interference so T_interference <= T_delay.
        if win["t_outstanding"] > 0:
            frac = win["t_interference"] / win["t_outstanding"]
            win["t_interference"] = min(win["t_delay"], int(frac * win["t_delay"]))
        return win

    def total_energy_joules(self) -> tuple[float, float, float, float]:
        c = self.cycle
        return (self.dram_energy.dynamic_pj * 1e-12,
                self.dram_energy.standby_joules(c),
                self.nvm_energy.dynamic_pj * 1e-12,
                self.nvm_energy.standby_joules(c))

    def top_pages(self, k: int = 20):
        """Highest-utility stat entries with their factor decomposition."""
        rows = []
        for e in self.store.iter_entries():
            r_read, r_write = ubm.avg_mlp_ratio(e)
            dstall = ubm.stall_time_reduction(e, self.dram_timing, self.nvm_timing)
            rows.append({
                "page": e.page_id,
                "app": e.app_id,
                "accesses": e.access_count,
                "read_misses": e.read_misses,
                "write_misses": e.write_misses,
                "mlp_ratio_read": r_read,
                "mlp_ratio_write": r_write,
                "delta_stall": dstall,
                "utility": dstall * self.sensitivity(e.app_id),
            })
        rows.sort(key=lambda r: (-r["utility"], r["page"], r["app"]))
        return rows[:k]
