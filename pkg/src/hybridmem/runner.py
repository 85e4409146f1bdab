"""Experiment orchestration: single runs, alone-run management, sweeps.

A run simulates the full workload mix, then re-simulates every trace in
isolation (same configuration and policy) to obtain alone-run IPCs for the
speedup metrics. Alone runs are cached by (trace digest, config hash,
policy) so sweeps do not recompute them.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .controller import ControllerConfig
from .device import DRAM_BASELINE, NVM_BASELINE, DeviceGeometry, load_timing
from .metrics import AppResult, EnergyReport, SimReport, config_hash
from .simulator import SimConfig, Simulation
from .trace import Trace


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved description of one experiment point."""

    traces: tuple = ()                # paths; in-memory traces may be passed to run()
    policy: str = "ubm"
    dram_bytes: int = 512 << 20
    nvm_bytes: int = 16 << 30
    dram_preset: str = "dram-baseline"
    nvm_preset: str = "nvm-baseline"
    t_rcd_mult: float = 1.0           # NVM activation-time scaling
    t_wr_mult: float = 1.0            # NVM write-recovery scaling
    page_bytes: int = 8192
    quantum_cycles: int = 1_000_000
    sampling_period: int = 30
    warmup_instructions: int = 0
    measured_instructions: int = 1_000_000
    rob_capacity: int = 128
    mshr_capacity: int = 32
    read_queue: int = 64
    write_buffer: int = 32
    migration_enabled: bool = True
    preload_dram_pages: tuple = ()
    seed: int = 0
    max_cycles: int | None = None
    collect_quantum_log: bool = False

    def validate(self):
        if self.warmup_instructions + self.measured_instructions <= 0:
            raise ValueError("warmup + measured instructions must be positive")
        if self.measured_instructions <= 0:
            raise ValueError("measured instruction count must be positive")
        if self.dram_bytes <= 0 or self.nvm_bytes <= 0:
            raise ValueError("device sizes must be positive")

    def sim_config(self) -> SimConfig:
        self.validate()
        nvm_timing = load_timing(self.nvm_preset).scaled(self.t_rcd_mult,
                                                         self.t_wr_mult)
        return SimConfig(
            dram_timing=load_timing(self.dram_preset),
            nvm_timing=nvm_timing,
            dram_geometry=DeviceGeometry(self.dram_bytes,
                                         page_bytes=self.page_bytes,
                                         row_buffer_bytes=self.page_bytes),
            nvm_geometry=DeviceGeometry(self.nvm_bytes,
                                        page_bytes=self.page_bytes,
                                        row_buffer_bytes=self.page_bytes),
            controller=ControllerConfig(read_queue_capacity=self.read_queue,
                                        write_buffer_capacity=self.write_buffer),
            policy=self.policy,
            quantum_cycles=self.quantum_cycles,
            sampling_period=self.sampling_period,
            warmup_instructions=self.warmup_instructions,
            measured_instructions=self.measured_instructions,
            rob_capacity=self.rob_capacity,
            mshr_capacity=self.mshr_capacity,
            migration_enabled=self.migration_enabled,
            preload_dram_pages=tuple(self.preload_dram_pages),
            max_cycles=self.max_cycles,
            collect_quantum_log=self.collect_quantum_log,
        )

    def resolved(self) -> dict:
        d = {
            "traces": list(self.traces),
            "policy": self.policy,
            "dram_bytes": self.dram_bytes,
            "nvm_bytes": self.nvm_bytes,
            "dram_preset": self.dram_preset,
            "nvm_preset": self.nvm_preset,
            "t_rcd_mult": self.t_rcd_mult,
            "t_wr_mult": self.t_wr_mult,
            "page_bytes": self.page_bytes,
            "quantum_cycles": self.quantum_cycles,
            "sampling_period": self.sampling_period,
            "warmup_instructions": self.warmup_instructions,
            "measured_instructions": self.measured_instructions,
            "rob_capacity": self.rob_capacity,
            "mshr_capacity": self.mshr_capacity,
            "read_queue": self.read_queue,
            "write_buffer": self.write_buffer,
            "migration_enabled": self.migration_enabled,
            "preload_dram_pages": list(self.preload_dram_pages),
            "seed": self.seed,
        }
        return d


@dataclass(frozen=True)
class SweepSpec:
    axis: str                 # "dram_size" or "nvm_latency"
    values: tuple             # sizes in bytes, or (t_rcd_mult, t_wr_mult) pairs

    def validate(self):
        if self.axis not in ("dram_size", "nvm_latency"):
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        keys = [v if self.axis == "dram_size" else tuple(v) for v in self.values]
        if sorted(keys) != keys or len(set(keys)) != len(keys):
            raise ValueError("sweep values must be strictly increasing")

    def apply(self, config: ExperimentConfig, value) -> ExperimentConfig:
        if self.axis == "dram_size":
            return replace(config, dram_bytes=int(value))
        rcd, wr = value
        return replace(config, t_rcd_mult=float(rcd), t_wr_mult=float(wr))


def _load_traces(config: ExperimentConfig, traces):
    if traces is not None:
        return list(traces)
    if not config.traces:
        raise ValueError("no traces configured")
    return [Trace.from_file(p) for p in config.traces]


def _simulate(config: ExperimentConfig, traces) -> Simulation:
    sim = Simulation(config.sim_config(), traces)
    return sim.run()


def run(config: ExperimentConfig, traces=None, alone: bool = True,
        alone_cache: dict | None = None) -> SimReport:
    """Simulate the mix; optionally add alone-run IPCs and speedup metrics."""
    traces = _load_traces(config, traces)
    sim = _simulate(config, traces)
    resolved = config.resolved()
    chash = config_hash(resolved)

    apps = []
    for i, core in enumerate(sim.cores):
        win = sim.measured_window(i)
        ipc = core.ipc()
        if ipc is None:  # run hit max_cycles before this app finished
            win_cycles = max(1, win["cycle"])
            ipc = (core.head - core.warm_pos) / win_cycles
        apps.append(AppResult(
            app_id=i,
            name=core.name,
            instructions=config.measured_instructions,
            cycles=win["cycle"],
            ipc_shared=ipc,
            t_stall=win["t_stall"],
            t_delay=win["t_delay"],
            t_interference=win["t_interference"],
            reads=win["reads"],
            writes=win["writes"],
            row_hits=win["row_hits"],
            row_misses=win["row_misses"],
        ))

    dram_dyn, dram_stby, nvm_dyn, nvm_stby = sim.total_energy_joules()
    report = SimReport(
        policy=config.policy,
        config=resolved,
        config_hash=chash,
        elapsed_cycles=sim.cycle,
        elapsed_seconds=sim.cycle * sim.config.dram_timing.clock_period_ns * 1e-9,
        apps=apps,
        energy=EnergyReport(dram_dyn, dram_stby, nvm_dyn, nvm_stby),
        total_stall=sum(c.t_stall for c in sim.cores),
        pages_promoted=sim.engine.pages_promoted,
        pages_evicted=sim.engine.pages_evicted,
        migration_bytes=sim.engine.traffic_bytes,
    )

    if alone:
        for i, tr in enumerate(traces):
            apps[i].ipc_alone = alone_ipc(config, tr, alone_cache)
        report.compute_speedups()
    report._sim = sim  # transient handle for callers that inspect state
    return report


def alone_ipc(config: ExperimentConfig, trace: Trace,
              cache: dict | None = None) -> float:
    """IPC of one trace run in isolation under the same config and policy."""
    alone_cfg = replace(config, traces=())
    key = (trace.digest(), config_hash(alone_cfg.resolved()), config.policy)
    if cache is not None and key in cache:
        return cache[key]
    sim = _simulate(alone_cfg, [trace])
    ipc = sim.cores[0].ipc()
    if ipc is None:
        ipc = sim.cores[0].head / max(1, sim.cycle)
    if cache is not None:
        cache[key] = ipc
    return ipc


def sweep(config: ExperimentConfig, spec: SweepSpec, traces=None,
          alone: bool = True):
    """Run every sweep point; returns [(value, SimReport | Exception)]."""
    spec.validate()
    traces = _load_traces(config, traces)
    cache: dict = {}
    results = []
    for value in spec.values:
        point = spec.apply(config, value)
        try:
            results.append((value, run(point, traces=traces, alone=alone,
                                       alone_cache=cache)))
        except Exception as exc:  # a broken point must not kill the sweep
            results.append((value, exc))
    return results


# ---------------------------------------------------------------------------
# Config file parsing (INI-style: [experiment] and optional [sweep] sections)

_BOOL_KEYS = {"migration_enabled", "collect_quantum_log"}
_INT_KEYS = {
    "dram_bytes", "nvm_bytes", "page_bytes", "quantum_cycles",
    "sampling_period", "warmup_instructions", "measured_instructions",
    "rob_capacity", "mshr_capacity", "read_queue", "write_buffer",
    "seed", "max_cycles",
}
_FLOAT_KEYS = {"t_rcd_mult", "t_wr_mult"}


def load_experiment_config(path) -> tuple[ExperimentConfig, SweepSpec | None]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    kwargs = {}
    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            if key == "traces":
                kwargs["traces"] = tuple(t.strip() for t in raw.split(",") if t.strip())
            elif key == "preload_dram_pages":
                kwargs["preload_dram_pages"] = tuple(
                    int(t) for t in raw.replace(",", " ").split())
            elif key in _BOOL_KEYS:
                kwargs[key] = parser.getboolean("experiment", key)
            elif key in _INT_KEYS:
                kwargs[key] = int(raw)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(raw)
            elif key in ("policy", "dram_preset", "nvm_preset"):
                kwargs[key] = raw.strip()
            else:
                raise ValueError(f"{path}: unknown experiment key {key!r}")
    config = ExperimentConfig(**kwargs)

    spec = None
    if parser.has_section("sweep"):
        axis = parser.get("sweep", "axis")
        raw = parser.get("sweep", "values")
        if axis == "dram_size":
            values = tuple(int(v) for v in raw.replace(",", " ").split())
        else:
            pairs = [p.strip() for p in raw.split(";") if p.strip()]
            values = tuple(tuple(float(x) for x in p.replace(",", " ").split())
                           for p in pairs)
        spec = SweepSpec(axis=axis, values=values)
        spec.validate()
    return config, spec
