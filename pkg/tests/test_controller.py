import pytest

from hybridmem.controller import (
    ChannelController, ControllerConfig, MemRequest, NVM_CHANNEL, SYSTEM_APP,
)
from hybridmem.device import (
    DeviceGeometry, NVM_BASELINE, READ, WRITE, ROW_HIT, ROW_MISS, EnergyMeter,
    service_latency,
)

GEO = DeviceGeometry(64 << 20)


def make_controller(**cfg):
    config = ControllerConfig(**cfg)
    energy = EnergyMeter(NVM_BASELINE, GEO)
    return ChannelController(NVM_CHANNEL, NVM_BASELINE, GEO, config, energy)


def req(req_id, page, kind=READ, app=0, demand=True):
    r = MemRequest(req_id, app, page, kind, is_demand=demand)
    r.bank_id = page % GEO.banks
    return r


def test_fr_fcfs_prefers_row_hit_over_older_miss():
    c = make_controller()
    c.banks[0].open_for(16, app_id=0)   # page 16 maps to bank 0, row open
    older_miss = req(1, 8)              # bank 0, different row
    newer_hit = req(2, 16)
    assert c.enqueue(older_miss, 5)
    assert c.enqueue(newer_hit, 9)
    winner = c.try_issue(10)
    assert winner is newer_hit
    assert winner.outcome == ROW_HIT


def test_fr_fcfs_fcfs_tiebreak_between_hits():
    c = make_controller()
    c.banks[0].open_for(8, app_id=0)
    a = req(1, 8)
    b = req(2, 8)
    c.enqueue(a, 5)
    c.enqueue(b, 9)
    assert c.try_issue(10) is a


def test_empty_queue_issues_nothing():
    c = make_controller()
    assert c.try_issue(0) is None


def test_one_issue_per_cycle_and_bank_busy():
    c = make_controller()
    a = req(1, 0)   # bank 0
    b = req(2, 1)   # bank 1
    c.enqueue(a, 0)
    c.enqueue(b, 0)
    assert c.try_issue(0) is a
    assert c.try_issue(0) is b      # second command slot modeled per call
    # Bank 0 is now busy until its service completes.
    c2 = req(3, 8)  # bank 0 again
    c.enqueue(c2, 1)
    assert c.try_issue(1) is None
    assert c.try_issue(a.completion_cycle) is c2


def test_completion_frees_queue_slot():
    c = make_controller(read_queue_capacity=2, migration_reserve_reads=1)
    a, b = req(1, 0), req(2, 1)
    assert c.enqueue(a, 0)
    assert not c.enqueue(b, 0)       # demand cap = capacity - reserve
    mig = req(3, 2, demand=False)
    assert c.enqueue(mig, 0)         # reserve slot admits migration traffic
    c.try_issue(0)
    assert not c.has_read_space()
    c.on_complete(a)
    c.on_complete(mig)
    assert c.enqueue(b, a.completion_cycle)


def test_drain_watermark_strictly_exceeds():
    c = make_controller(write_buffer_capacity=32, drain_high_watermark=0.75,
                        migration_reserve_writes=0)
    for i in range(24):
        assert c.enqueue(req(i, i, kind=WRITE), 0)
    assert not c.draining            # 24 == 0.75 * 32: not yet
    assert c.enqueue(req(99, 99, kind=WRITE), 0)
    assert c.draining                # 24 -> 25 crosses the watermark


def test_full_buffer_forces_drain_and_low_watermark_exits():
    c = make_controller(write_buffer_capacity=8, drain_high_watermark=0.8,
                        drain_low_watermark=0.25, migration_reserve_writes=0)
    writes = [req(i, i, kind=WRITE) for i in range(8)]
    for w in writes:
        assert c.enqueue(w, 0)
    assert c.draining
    # Draining prefers writes; completions below the low watermark stop it.
    t = 0
    while c.write_occupancy > 2:
        w = c.try_issue(t)
        if w is None:
            t += 1
            continue
        assert w.kind == WRITE
        c.on_complete(w)
        t = max(t, w.completion_cycle)
    assert not c.draining


def test_writes_not_issued_outside_drain_by_default():
    c = make_controller()
    c.enqueue(req(1, 0, kind=WRITE), 0)
    assert c.try_issue(0) is None
    c2 = make_controller(opportunistic_writes=True)
    c2.enqueue(req(1, 0, kind=WRITE), 0)
    assert c2.try_issue(0) is not None


def test_solo_app_has_zero_interference():
    c = make_controller()
    reqs = [req(i, i % 4, app=0) for i in range(10)]
    t = 0
    pending = list(reqs)
    for r in pending:
        c.enqueue(r, t)
    done = 0
    while done < len(reqs):
        w = c.try_issue(t)
        if w is not None:
            done += 1
        t += 1
    assert all(r.interference_delay == 0 for r in reqs)


def test_same_app_blocking_excluded():
    c = make_controller()
    a = req(1, 0, app=3)
    b = req(2, 8, app=3)   # same bank, same app
    c.enqueue(a, 0)
    c.enqueue(b, 0)
    c.try_issue(0)
    assert c.try_issue(a.completion_cycle) is b
    assert b.interference_delay == 0


def test_bank_conflict_blamed_on_other_app():
    c = make_controller()
    a = req(1, 0, app=0)
    b = req(2, 8, app=1)   # same bank, other app
    c.enqueue(a, 0)
    c.enqueue(b, 0)
    c.try_issue(0)
    c.try_issue(a.completion_cycle)
    # b waited out a's whole service on the bank.
    assert b.interference_delay >= a.completion_cycle - 1


def test_system_traffic_not_charged():
    c = make_controller()
    mig = req(1, 0, app=SYSTEM_APP, demand=False)
    b = req(2, 8, app=1)
    c.enqueue(mig, 0)
    c.enqueue(b, 0)
    c.try_issue(0)
    c.try_issue(mig.completion_cycle)
    assert b.interference_delay == 0


def test_row_conversion_penalty():
    c = make_controller()
    c.banks[0].open_for(16, app_id=1)    # row 16 open on bank 0
    victim = req(1, 16, app=1)           # would hit
    closer = req(2, 8, app=2)            # other app closes the row
    c.enqueue(closer, 0)
    c.enqueue(victim, 0)
    w1 = c.try_issue(0)                  # closer is older; both miss/hit?
    # closer misses (row 16 open, wants row 8): victim is the row hit and
    # wins FR-FCFS, so force the order: issue closer first by aging.
    assert w1 is victim                  # row hit wins first
    assert victim.interference_delay == 0

    # Now the conversion case: arrange arrival so the miss issues first.
    c2 = make_controller()
    c2.banks[0].open_for(16, app_id=1)
    closer = req(1, 8, app=2)
    c2.enqueue(closer, 0)
    w = c2.try_issue(0)
    assert w is closer
    victim = req(2, 16, app=1)           # arrives while row 16 still open?
    # Row already switched by the activation of row 8: arrival sees a miss,
    # so no conversion is recorded.
    c2.enqueue(victim, 1)
    assert not victim.would_hit

    c3 = make_controller()
    c3.banks[0].open_for(16, app_id=1)
    victim = req(1, 16, app=1)
    c3.enqueue(victim, 0)                # would-hit snapshot taken
    closer = req(2, 8, app=2)
    c3.enqueue(closer, 0)
    # Make the bank busy with the closer first despite FR-FCFS by issuing
    # at a cycle where only the closer is eligible: simulate by directly
    # servicing the closer.
    c3.read_wait[0].remove(victim)
    c3.read_waiting -= 1
    w = c3.try_issue(0)
    assert w is closer
    c3.read_wait[0].append(victim)
    c3.read_waiting += 1
    w2 = c3.try_issue(closer.completion_cycle)
    assert w2 is victim
    assert victim.outcome == ROW_MISS
    extra = (service_latency(NVM_BASELINE, READ, ROW_MISS)
             - service_latency(NVM_BASELINE, READ, ROW_HIT))
    assert victim.interference_delay >= extra


def test_lost_arbitration_slot_counted():
    c = make_controller()
    a = req(1, 0, app=0)   # bank 0
    b = req(2, 1, app=1)   # bank 1, both bank-ready
    c.enqueue(a, 0)
    c.enqueue(b, 0)
    w = c.try_issue(0)
    assert w is a          # older
    assert b.interference_delay == 1


def test_deterministic_schedule():
    def run_once():
        c = make_controller()
        order = []
        reqs = [req(i, p, app=i % 2) for i, p in enumerate([0, 8, 1, 9, 2, 3])]
        for i, r in enumerate(reqs):
            c.enqueue(r, i // 2)
        t = 0
        while len(order) < len(reqs):
            w = c.try_issue(t)
            if w is not None:
                order.append(w.id)
            t += 1
        return order

    assert run_once() == run_once()


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(drain_high_watermark=0.2, drain_low_watermark=0.5)
    with pytest.raises(ValueError):
        ControllerConfig(read_queue_capacity=0)
    with pytest.raises(ValueError):
        ControllerConfig(migration_reserve_reads=64)
