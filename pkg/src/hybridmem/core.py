"""Trace-driven application core.

Models a reorder buffer as a sliding window over the instruction stream:
the tail admits instructions (and dispatches memory operations) at the
issue width, the head retires them at the same width. A read blocks the
head until its data returns; those blocked cycles are the stall time.
Stores retire immediately, but an un-injectable request (full write buffer
or full read queue) gates further memory dispatch, and a pipeline fully
drained behind a gated write also counts as stall time.

Between memory events both pointers move linearly at the retire width, so
the core advances in closed-form segments rather than cycle by cycle.
Boundary cycles with partial retirement count as unstalled.
"""

from __future__ import annotations

from collections import deque

from .device import READ, WRITE

STALL_NONE = 0
STALL_HEAD = 1   # incomplete read at the head of the window
STALL_WB = 2     # pipeline drained behind a write awaiting a buffer slot


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class AppCore:
    RETIRE_WIDTH = 3

    def __init__(self, sim, app_id: int, trace, rob_capacity: int = 128,
                 mshr_capacity: int = 32, warmup_instructions: int = 0,
                 measured_instructions: int = 1_000_000):
        self.sim = sim
        self.app_id = app_id
        self.name = trace.header.app
        events = trace.events
        if not events:
            raise ValueError(f"trace for app {app_id} has no events")
        self.gaps = [e.inst_gap for e in events]
        self.addrs = [e.address for e in events]
        self.kinds = [e.kind for e in events]
        self.n_events = len(events)
        self.idx = 0
        self.wraps = 0

        self.rob_capacity = rob_capacity
        self.mshr_capacity = mshr_capacity
        self.cycle = 0
        self.head = 0   # instructions retired
        self.tail = 0   # instructions admitted to the window
        self.next_mem_pos = self.gaps[0]
        self.window_reads = deque()    # (position, request), dispatch order
        self.pending_inject = deque()  # requests parked on a full queue
        self.outstanding_reads = 0     # MSHR occupancy, dispatch -> completion
        self.tail_block = None         # None | 'mshr' | 'gate' | 'rob'
        self.head_pin = None           # request the head is blocked on
        self.next_wake = None          # earliest pending simulator wake

        # Stall accounting: one open span at a time, settled on transitions.
        self.stall_mode = STALL_NONE
        self.stall_anchor = 0
        self.stall_page = -1
        self.t_stall = 0
        self.q_stall = 0   # since the last quantum boundary

        self.warm_pos = warmup_instructions
        self.done_pos = warmup_instructions + measured_instructions
        self.warm_cycle = 0 if warmup_instructions == 0 else None
        self.done_cycle = None

    # -- trajectory pieces ----------------------------------------------------

    def _head_stop(self):
        """Position where the head must pause next (None = unbounded)."""
        wr = self.window_reads
        head = self.head
        while wr and wr[0][0] < head:   # retired reads fall off the front
            wr.popleft()
        stop = None
        for pos, req in wr:
            if not req.done:
                stop = pos
                break
        if self.tail_block is not None:
            stop = self.tail if stop is None else min(stop, self.tail)
        return stop

    def _record_markers(self, old_head: int, new_head: int, seg_start: int):
        w = self.RETIRE_WIDTH
        if self.warm_cycle is None and old_head < self.warm_pos <= new_head:
            self.warm_cycle = seg_start + _ceil_div(self.warm_pos - old_head, w)
            self.sim.on_app_marker(self, "warm", self.warm_cycle)
        if self.done_cycle is None and old_head < self.done_pos <= new_head:
            self.done_cycle = seg_start + _ceil_div(self.done_pos - old_head, w)
            self.sim.on_app_marker(self, "done", self.done_cycle)

    def _try_dispatch(self):
        """Admit instructions at the tail; dispatch memory ops while possible."""
        while self.tail == self.next_mem_pos:
            if self.tail >= self.head + self.rob_capacity:
                self.tail_block = "rob"
                return
            if self.pending_inject:
                self.tail_block = "gate"
                return
            kind = self.kinds[self.idx]
            if kind == READ and self.outstanding_reads >= self.mshr_capacity:
                self.tail_block = "mshr"
                return
            addr = self.addrs[self.idx]
            pos = self.next_mem_pos
            self.tail = pos + 1
            self.idx += 1
            if self.idx == self.n_events:
                self.idx = 0
                self.wraps += 1
            self.next_mem_pos = self.tail + self.gaps[self.idx]
            req = self.sim.dispatch(self, addr, kind, self.cycle)
            if kind == READ:
                self.outstanding_reads += 1
                self.window_reads.append((pos, req))
        self.tail_block = None

    def _refresh_stall(self):
        mode = STALL_NONE
        page = -1
        if self.head_pin is not None:
            mode, page = STALL_HEAD, self.head_pin.page_id
        elif self.head == self.tail and self.tail_block == "gate" \
                and self.pending_inject:
            blocker = self.pending_inject[0]
            mode = STALL_WB if blocker.kind == WRITE else STALL_HEAD
            page = blocker.page_id
        elif self.head == self.tail and self.tail_block == "mshr":
            mode = STALL_HEAD
            page = self.addrs[self.idx] // self.sim.page_bytes
        if mode != self.stall_mode or page != self.stall_page:
            self.settle_stall(self.cycle)
            self.stall_mode = mode
            self.stall_page = page

    def settle_stall(self, now: int):
        if self.stall_mode != STALL_NONE and now > self.stall_anchor:
            span = now - self.stall_anchor
            self.t_stall += span
            self.q_stall += span
            self.sim.on_stall(self, self.stall_page, span)
        self.stall_anchor = now

    # -- main advance ---------------------------------------------------------

    def advance(self, now: int):
        if now <= self.cycle:
            return
        w = self.RETIRE_WIDTH
        while self.cycle < now:
            self._try_dispatch()
            head_stop = self._head_stop()
            if self.head_pin is None and head_stop == self.head \
                    and self.window_reads and self.window_reads[0][0] == self.head \
                    and not self.window_reads[0][1].done:
                self.head_pin = self.window_reads[0][1]
            head_free = self.head_pin is None
            self._refresh_stall()

            t_next = now
            if head_free and head_stop is not None and head_stop > self.head:
                t_next = min(t_next, self.cycle + _ceil_div(head_stop - self.head, w))
            if self.tail_block is None and self.next_mem_pos > self.tail:
                t_next = min(t_next, self.cycle + _ceil_div(self.next_mem_pos - self.tail, w))
            elif self.tail_block == "rob" and head_free:
                # Retirement frees window slots; dispatch resumes mid-run.
                need = self.tail - self.rob_capacity + 1
                if need > self.head:
                    t_next = min(t_next, self.cycle + _ceil_div(need - self.head, w))

            dt = t_next - self.cycle
            if dt <= 0:
                # Fully blocked until an external event: idle through to now.
                self.cycle = now
                break
            new_tail = self.tail
            if self.tail_block is None:
                new_tail = min(self.tail + w * dt, self.next_mem_pos)
            new_head = self.head
            if head_free:
                new_head = self.head + w * dt
                if head_stop is not None:
                    new_head = min(new_head, head_stop)
                new_head = min(new_head, new_tail)
            if new_head > self.head:
                self._record_markers(self.head, new_head, self.cycle)
            self.head = new_head
            self.tail = new_tail
            self.cycle = t_next
        self.settle_open_spans()

    def settle_open_spans(self):
        if self.stall_mode != STALL_NONE:
            self.settle_stall(self.cycle)

    # -- wakeups --------------------------------------------------------------

    def on_read_complete(self, req, now: int):
        # Settle up to `now` with the read still outstanding, then release it.
        self.advance(now)
        req.done = True
        self.outstanding_reads -= 1
        if self.head_pin is req:
            self.head_pin = None
        self.run_to(now)

    def run_to(self, now: int):
        """Advance to `now`, perform due dispatches, plan the next wake."""
        self.advance(now)
        self._try_dispatch()
        self._refresh_stall()
        self.schedule_next()

    def schedule_next(self):
        if self.tail_block is None:
            if self.next_mem_pos > self.tail:
                t = self.cycle + _ceil_div(self.next_mem_pos - self.tail,
                                           self.RETIRE_WIDTH)
                self.sim.schedule_core(self, t)
            else:
                self.sim.schedule_core(self, self.cycle)
        elif self.tail_block == "rob" and self.head_pin is None:
            need = self.tail - self.rob_capacity + 1
            stop = self._head_stop()
            if need > self.head and (stop is None or stop >= need):
                t = self.cycle + _ceil_div(need - self.head, self.RETIRE_WIDTH)
                self.sim.schedule_core(self, t)
        # A blocked core is woken by completions/injections, but a free run
        # toward an uncrossed marker needs a proactive wake.
        if self.done_cycle is None and self.head_pin is None:
            nxt = self.warm_pos if self.warm_cycle is None else self.done_pos
            stop = self._head_stop()
            if self.head < nxt <= self.tail and (stop is None or stop >= nxt):
                t = self.cycle + _ceil_div(nxt - self.head, self.RETIRE_WIDTH)
                self.sim.schedule_core(self, t)

    def ipc(self) -> float | None:
        if self.warm_cycle is None or self.done_cycle is None:
            return None
        cycles = max(1, self.done_cycle - self.warm_cycle)
        return (self.done_pos - self.warm_pos) / cycles
