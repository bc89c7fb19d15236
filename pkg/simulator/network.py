"""
Multi-hop queuing network with switch-side congestion marking
Per-switch FIFO egress queues, Poisson cross-traffic and four-timestamp sync probes
"""

import heapq
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from analyzers.tune import FLOW_PATTERNS
from config import Config
from protocol.cmc import Direction, MarkingConfig, MarkingHeader
from protocol.sync import (
    OffsetEstimate,
    SyncRound,
    compensate_fr_mode,
    compensate_server_mode,
    estimate_offset,
)
from simulator.events import EventCalendar

logger = logging.getLogger(__name__)

MIN_FRAME_BYTES = 46
MAX_FRAME_BYTES = 1500
# Ethernet and PHY headers plus the interpacket gap
FRAMING_OVERHEAD_BYTES = 54 + 12
DRAW_BATCH = 4096


class FlowSpec(BaseModel):
    """Poisson cross-traffic entering one egress queue, optionally duty cycled."""

    model_config = ConfigDict(frozen=True)

    mean_packet_bytes: float = Field(gt=0)
    mean_interarrival_us: float = Field(gt=0)
    on_duration_ns: int = Field(0, ge=0)
    off_duration_ns: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _duty_cycle(self) -> "FlowSpec":
        if self.off_duration_ns > 0 and self.on_duration_ns <= 0:
            raise ValueError("on_duration_ns must be positive when off_duration_ns is set")
        return self

    @classmethod
    def from_pattern(cls, name: str, **overrides: Any) -> "FlowSpec":
        try:
            size, gap = FLOW_PATTERNS[name.upper()]
        except KeyError:
            raise ValueError(f"Unknown flow pattern '{name}', choose from {sorted(FLOW_PATTERNS)}") from None
        return cls(mean_packet_bytes=size, mean_interarrival_us=gap, **overrides)

    @property
    def duty_cycle(self) -> float:
        if self.off_duration_ns == 0:
            return 1.0
        return self.on_duration_ns / (self.on_duration_ns + self.off_duration_ns)


class HopSpec(BaseModel):
    """Cross-traffic at one switch; forward feeds the queue toward the server."""

    model_config = ConfigDict(frozen=True)

    forward: Optional[FlowSpec] = None
    reverse: Optional[FlowSpec] = None

    def flow(self, direction: Direction) -> Optional[FlowSpec]:
        return self.forward if direction is Direction.FORWARD else self.reverse


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    hops: List[HopSpec] = Field(min_length=1)
    line_rate: float = Field(1e9, gt=0)
    framing: bool = False
    marking: MarkingConfig = Field(default_factory=MarkingConfig)
    sync_interval_ns: int = Field(250_000_000, gt=0)
    duration_ns: int = Field(gt=0)
    base_delay_ns: int = Field(0, ge=0)
    seed: int = Field(0, ge=0)
    replications: int = Field(1, ge=1)
    sync_packet_bytes: int = Field(90, gt=0)
    server_turnaround_ns: int = Field(0, ge=0)
    true_offset_ns: int = 0
    buffer_bits: float = Field(1e9, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _marking_line_rate(cls, data: Any) -> Any:
        # Marking inherits the scenario line rate unless it names its own
        if not isinstance(data, dict):
            return data
        rate = data.get("line_rate", 1e9)
        marking = data.get("marking")
        if marking is None:
            return {**data, "marking": {"line_rate": rate}}
        if isinstance(marking, dict) and "line_rate" not in marking:
            return {**data, "marking": {**marking, "line_rate": rate}}
        if isinstance(marking, MarkingConfig) and "line_rate" not in marking.model_fields_set:
            return {**data, "marking": MarkingConfig(**{**marking.model_dump(exclude={"line_rate"}), "line_rate": rate})}
        return data

    @model_validator(mode="after")
    def _consistent(self) -> "ScenarioSpec":
        if self.duration_ns <= self.sync_interval_ns:
            raise ValueError("duration_ns must exceed sync_interval_ns")
        if self.marking.line_rate != self.line_rate:
            raise ValueError(
                f"marking.line_rate={self.marking.line_rate} differs from scenario line_rate={self.line_rate}"
            )
        return self


@dataclass
class QueueState:
    """Work-conserving FIFO egress queue tracked by the time its backlog drains."""

    line_rate: float
    buffer_bits: float
    busy_until: int = 0
    served: int = 0
    dropped: int = 0
    busy_time: int = 0
    waits: List[int] = field(default_factory=list)
    waiting_area: float = 0.0
    clock: int = 0
    _starts: List[int] = field(default_factory=list, repr=False)

    def occupancy_bits(self, now: int) -> float:
        """Bits still queued or in service when a packet arrives at `now`."""
        return max(self.busy_until - now, 0) * self.line_rate / 1e9

    def service_time(self, size_bytes: float) -> int:
        return int(round(size_bytes * 8.0 * 1e9 / self.line_rate))

    def advance(self, now: int) -> None:
        """Integrate the number of packets waiting for service up to `now`."""
        while self._starts and self._starts[0] <= now:
            start = self._starts[0]
            self.waiting_area += len(self._starts) * (start - self.clock)
            self.clock = start
            heapq.heappop(self._starts)
        if now > self.clock:
            self.waiting_area += len(self._starts) * (now - self.clock)
            self.clock = now

    def drain(self, now: int) -> int:
        """Close the occupancy integral once every admitted packet has entered service."""
        horizon = max(now, self.busy_until, 1)
        self.advance(horizon)
        return horizon

    def enqueue(self, now: int, size_bytes: float) -> Optional[Tuple[int, int]]:
        """Admit a packet; returns (wait, departure) or None when the buffer overflows."""
        self.advance(now)
        if self.occupancy_bits(now) + size_bytes * 8.0 > self.buffer_bits:
            self.dropped += 1
            return None
        start = max(now, self.busy_until)
        service = self.service_time(size_bytes)
        self.busy_until = start + service
        self.busy_time += service
        self.served += 1
        wait = start - now
        self.waits.append(wait)
        if wait > 0:
            heapq.heappush(self._starts, start)
        return wait, self.busy_until

    @property
    def mean_wait_ns(self) -> float:
        return float(np.mean(self.waits)) if self.waits else 0.0


def wire_bytes(payload_bytes: np.ndarray) -> np.ndarray:
    """
    Bytes on the wire for cross-traffic payloads: short payloads are padded to the
    minimum frame, long ones go out as back-to-back MTU frames, and every frame
    pays the header and interpacket gap.
    """
    payload = np.maximum(np.asarray(payload_bytes, dtype=float), MIN_FRAME_BYTES)
    frames = np.ceil(payload / MAX_FRAME_BYTES)
    return payload + frames * FRAMING_OVERHEAD_BYTES


class _TrafficSource:
    """Batched exponential draws for one flow."""

    def __init__(self, flow: FlowSpec, framing: bool, rng: np.random.Generator):
        self.flow = flow
        self.framing = framing
        self.rng = rng
        self._gaps = np.empty(0, dtype=np.int64)
        self._sizes = np.empty(0)
        self._gap_pos = 0
        self._size_pos = 0

    def _gap(self) -> int:
        if self._gap_pos >= self._gaps.size:
            mean_ns = self.flow.mean_interarrival_us * 1000.0
            self._gaps = np.rint(self.rng.exponential(mean_ns, DRAW_BATCH)).astype(np.int64)
            self._gap_pos = 0
        gap = int(self._gaps[self._gap_pos])
        self._gap_pos += 1
        return gap

    def next_size(self) -> float:
        if self._size_pos >= self._sizes.size:
            sizes = self.rng.exponential(self.flow.mean_packet_bytes, DRAW_BATCH)
            if self.framing:
                sizes = wire_bytes(sizes)
            self._sizes = sizes
            self._size_pos = 0
        size = float(self._sizes[self._size_pos])
        self._size_pos += 1
        return size

    def next_arrival(self, now: int) -> int:
        arrival = now + self._gap()
        on, off = self.flow.on_duration_ns, self.flow.off_duration_ns
        if off == 0:
            return arrival
        cycle = on + off
        # Arrivals that fall in an off period restart at the next on period
        while arrival % cycle >= on:
            arrival = (arrival // cycle + 1) * cycle + self._gap()
        return arrival


@dataclass
class QueueStats:
    hop: int
    direction: str
    rho_obs: float
    mean_wait_ns: float
    drops: int
    served: int
    mean_queue_length: float = 0.0
    arrival_rate_per_us: float = 0.0

    @property
    def littles_law_gap(self) -> float:
        """Relative gap between the time-average queue length and arrival rate times mean wait."""
        predicted = self.arrival_rate_per_us * self.mean_wait_ns / 1000.0
        scale = max(self.mean_queue_length, predicted)
        if scale <= 0:
            return 0.0
        return abs(self.mean_queue_length - predicted) / scale


@dataclass
class SimulatedRound:
    """A sync round with its estimates and the occupancies each hop marked on."""

    sync: SyncRound
    raw: OffsetEstimate
    compensated: OffsetEstimate
    fwd_occupancy: Tuple[float, ...] = ()
    rev_occupancy: Tuple[float, ...] = ()
    replication: int = 0

    @property
    def eps_raw(self) -> float:
        return self.raw.epsilon

    @property
    def eps_comp(self) -> float:
        return self.compensated.epsilon


@dataclass
class ScenarioResult:
    seed: int
    rounds: List[SimulatedRound]
    waits: Dict[Tuple[int, str], np.ndarray]
    queue_stats: List[QueueStats]
    lost_rounds: int = 0
    elapsed_ns: int = 0


@dataclass
class _Probe:
    index: int
    t1: int
    hops: int
    header: MarkingHeader = field(default_factory=MarkingHeader)
    direction: Direction = Direction.FORWARD
    position: int = 0
    t2: int = 0
    t3: int = 0
    fwd_waits: List[int] = field(default_factory=list)
    rev_waits: List[int] = field(default_factory=list)
    fwd_occupancy: List[float] = field(default_factory=list)
    rev_occupancy: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.fwd_waits = [0] * self.hops
        self.rev_waits = [0] * self.hops
        self.fwd_occupancy = [0.0] * self.hops
        self.rev_occupancy = [0.0] * self.hops

    @property
    def switch(self) -> int:
        if self.direction is Direction.FORWARD:
            return self.position
        return self.hops - 1 - self.position


class _NetworkSimulation:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.hop_count = len(spec.hops)
        self.queues: Dict[Tuple[int, Direction], QueueState] = {}
        self.sources: Dict[Tuple[int, Direction], _TrafficSource] = {}

        streams = np.random.SeedSequence(spec.seed).spawn(2 * self.hop_count)
        for hop, hop_spec in enumerate(spec.hops):
            for offset, direction in enumerate((Direction.FORWARD, Direction.REVERSE)):
                key = (hop, direction)
                self.queues[key] = QueueState(spec.line_rate, spec.buffer_bits)
                flow = hop_spec.flow(direction)
                if flow is not None:
                    rng = np.random.default_rng(streams[2 * hop + offset])
                    self.sources[key] = _TrafficSource(flow, spec.framing, rng)

        # Symmetric base delay split over the links of each direction
        links = self.hop_count + 1
        per_link = spec.base_delay_ns // links
        self.links = [per_link + spec.base_delay_ns % links] + [per_link] * self.hop_count

        self.calendar = EventCalendar()
        self.rounds: List[SimulatedRound] = []
        self.pending = 0
        self.lost = 0

    def _link_into(self, probe: _Probe) -> int:
        if probe.direction is Direction.FORWARD:
            return self.links[probe.position]
        return self.links[self.hop_count - probe.position]

    def run(self) -> ScenarioResult:
        spec = self.spec
        calendar = self.calendar
        for key, source in self.sources.items():
            first = source.next_arrival(0)
            if first < spec.duration_ns:
                calendar.schedule(first, "cross", key)
        calendar.schedule(spec.sync_interval_ns, "sync", 1)

        logger.info(
            f"Simulating {self.hop_count} hop(s) for {spec.duration_ns / 1e9:.3f} s "
            f"(seed {spec.seed}, {len(self.sources)} cross-traffic source(s))"
        )

        while calendar:
            event = calendar.pop()
            if event.kind == "cross":
                self._cross_arrival(event.time, event.payload)
            elif event.kind == "sync":
                self._launch(event.time, event.payload)
            else:
                self._probe_arrival(event.time, event.payload)

        return self._result()

    def _cross_arrival(self, now: int, key: Tuple[int, Direction]) -> None:
        source = self.sources[key]
        self.queues[key].enqueue(now, source.next_size())
        # Keep loading the network while probes launched before the end are in flight
        if now < self.spec.duration_ns or self.pending > 0:
            self.calendar.schedule(source.next_arrival(now), "cross", key)

    def _launch(self, now: int, index: int) -> None:
        probe = _Probe(index=index, t1=now, hops=self.hop_count)
        self.pending += 1
        self.calendar.schedule(now + self._link_into(probe), "probe", probe)
        following = now + self.spec.sync_interval_ns
        if following < self.spec.duration_ns:
            self.calendar.schedule(following, "sync", index + 1)

    def _probe_arrival(self, now: int, probe: _Probe) -> None:
        spec = self.spec
        switch = probe.switch
        queue = self.queues[(switch, probe.direction)]

        occupancy = queue.occupancy_bits(now)
        outcome = queue.enqueue(now, spec.sync_packet_bytes)
        if outcome is None:
            self.pending -= 1
            self.lost += 1
            logger.debug(f"Sync round {probe.index} dropped at switch {switch} ({probe.direction.value})")
            return
        wait, departure = outcome
        probe.header = probe.header.mark(probe.direction, occupancy, spec.marking)

        if probe.direction is Direction.FORWARD:
            probe.fwd_waits[switch] = wait
            probe.fwd_occupancy[switch] = occupancy
        else:
            probe.rev_waits[switch] = wait
            probe.rev_occupancy[switch] = occupancy

        probe.position += 1
        if probe.position < self.hop_count:
            self.calendar.schedule(departure + self._link_into(probe), "probe", probe)
            return

        if probe.direction is Direction.FORWARD:
            arrival = departure + self.links[self.hop_count]
            probe.t2 = arrival + spec.true_offset_ns
            probe.t3 = probe.t2 + spec.server_turnaround_ns
            probe.direction = Direction.REVERSE
            probe.position = 0
            self.calendar.schedule(arrival + spec.server_turnaround_ns + self._link_into(probe), "probe", probe)
            return

        self._finish(probe, departure + self.links[0])

    def _finish(self, probe: _Probe, t4: int) -> None:
        spec = self.spec
        sync_round = SyncRound(
            t1=probe.t1,
            t2=probe.t2,
            t3=probe.t3,
            t4=t4,
            fwd_counter=probe.header.forward,
            rev_counter=probe.header.reverse,
            delta_star=spec.marking.delta_star,
            true_offset=float(spec.true_offset_ns),
            index=probe.index,
            fwd_waits=tuple(probe.fwd_waits),
            rev_waits=tuple(probe.rev_waits),
        )
        capacity = spec.marking.capacity
        if spec.marking.fr_split:
            compensated = compensate_fr_mode(sync_round, capacity)
        else:
            compensated = compensate_server_mode(sync_round, capacity)
        self.rounds.append(
            SimulatedRound(
                sync=sync_round,
                raw=estimate_offset(sync_round),
                compensated=compensated,
                fwd_occupancy=tuple(probe.fwd_occupancy),
                rev_occupancy=tuple(probe.rev_occupancy),
            )
        )
        self.pending -= 1

    def _result(self) -> ScenarioResult:
        elapsed = max(self.calendar.now, 1)
        stats, waits = [], {}
        for (hop, direction), queue in sorted(self.queues.items(), key=lambda item: (item[0][0], item[0][1].value)):
            waits[(hop, direction.value)] = np.asarray(queue.waits, dtype=np.int64)
            horizon = queue.drain(elapsed)
            item = QueueStats(
                hop=hop,
                direction=direction.value,
                rho_obs=queue.busy_time / elapsed,
                mean_wait_ns=queue.mean_wait_ns,
                drops=queue.dropped,
                served=queue.served,
                mean_queue_length=queue.waiting_area / horizon,
                arrival_rate_per_us=queue.served * 1000.0 / horizon,
            )
            stats.append(item)
            if item.littles_law_gap > 0.05:
                logger.warning(
                    f"Switch {hop} ({direction.value}) fails the Little's law check: "
                    f"L={item.mean_queue_length:.4g}, lambda*W off by {item.littles_law_gap:.1%}"
                )
            if queue.dropped:
                logger.warning(f"Switch {hop} ({direction.value}) dropped {queue.dropped} packet(s)")

        self.rounds.sort(key=lambda item: item.sync.index)
        logger.info(f"Completed {len(self.rounds)} sync round(s), {self.lost} lost")
        return ScenarioResult(
            seed=self.spec.seed,
            rounds=self.rounds,
            waits=waits,
            queue_stats=stats,
            lost_rounds=self.lost,
            elapsed_ns=elapsed,
        )


def run_scenario(spec: ScenarioSpec) -> ScenarioResult:
    """Simulate one replication; deterministic for a given seed."""
    return _NetworkSimulation(spec).run()


def replication_seeds(seed: int, replications: int) -> List[int]:
    if replications == 1:
        return [seed]
    children = np.random.SeedSequence(seed).spawn(replications)
    return [int(child.generate_state(1)[0]) for child in children]


def run_replications(spec: ScenarioSpec, workers: Optional[int] = None) -> List[ScenarioResult]:
    """Run every replication with its own seed, in parallel up to CMC_THREADS processes."""
    seeds = replication_seeds(spec.seed, spec.replications)
    specs = [spec.model_copy(update={"seed": seed, "replications": 1}) for seed in seeds]
    workers = max(min(workers or Config.CMC_THREADS, len(specs)), 1)

    if workers == 1:
        results = [run_scenario(item) for item in specs]
    else:
        logger.info(f"Running {len(specs)} replications on {workers} worker process(es)")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_scenario, specs))

    for replication, result in enumerate(results):
        for simulated in result.rounds:
            simulated.replication = replication
    return results


def pooled_rounds(results: List[ScenarioResult]) -> List[SimulatedRound]:
    return [simulated for result in results for simulated in result.rounds]


def pooled_queue_stats(results: List[ScenarioResult]) -> List[QueueStats]:
    """Served-weighted merge of per-queue statistics across replications."""
    merged: Dict[Tuple[int, str], List[QueueStats]] = {}
    for result in results:
        for stats in result.queue_stats:
            merged.setdefault((stats.hop, stats.direction), []).append(stats)

    pooled = []
    for (hop, direction), items in sorted(merged.items()):
        served = sum(item.served for item in items)
        weight = [item.served / served if served else 1.0 / len(items) for item in items]
        pooled.append(
            QueueStats(
                hop=hop,
                direction=direction,
                rho_obs=float(np.mean([item.rho_obs for item in items])),
                mean_wait_ns=float(sum(w * item.mean_wait_ns for w, item in zip(weight, items))),
                drops=sum(item.drops for item in items),
                served=served,
                mean_queue_length=float(np.mean([item.mean_queue_length for item in items])),
                arrival_rate_per_us=float(np.mean([item.arrival_rate_per_us for item in items])),
            )
        )
    return pooled
