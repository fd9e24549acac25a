"""An HTCondor-like opportunistic pool with a deterministic virtual clock.

Jobs run on nodes that are unclaimed, below the CPU threshold, and free of
user input for the required idle window. Scheduling always happens on the
virtual clock, in both modes, so logs and timestamps are reproducible:

* Simulated mode: a started job finishes exactly ``sim_job_duration_s``
  later; its payload (if any) runs inline when the finish event fires.
* Real mode: payloads execute on a bounded worker set (one worker per
  slot) while the virtual timeline advances in nominal one-second job
  durations; the finish event joins the worker's result.

Output files are pre-created empty at submit and written atomically
(temp + rename) at completion, so a non-empty file is always a complete
one. Every state change appends one line to the ``log`` file.
"""

from __future__ import annotations

import heapq
import os
import re
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

REAL_NOMINAL_DURATION_S = 1.0


class PoolError(RuntimeError):
    """Scheduler-level failure: bad submission, unknown cluster or node, wedge."""


class Mode(Enum):
    REAL = "real"
    SIMULATED = "simulated"


class JobState(Enum):
    IDLE = "Idle"
    RUNNING = "Running"
    HELD = "Held"
    COMPLETED = "Completed"
    REMOVED = "Removed"


class NodeActivity(Enum):
    UNCLAIMED = "Unclaimed"
    CLAIMED = "Claimed"
    BUSY = "Busy"


class HoldCause(Enum):
    OUTPUT_NOT_WRITABLE = "output-not-writable"
    TRANSIENT = "transient"


@dataclass(frozen=True)
class FaultPlan:
    """Injected failures: holds by proc, node restarts, simulated user activity."""

    hold_faults: tuple[tuple[int, HoldCause], ...] = ()
    node_restarts: tuple[tuple[int, float], ...] = ()
    busy_periods: tuple[tuple[int, float, float], ...] = ()

    def validate(self, node_count: int) -> None:
        for node, when in self.node_restarts:
            if not 0 <= node < node_count:
                raise PoolError(f"fault plan names unknown node {node}")
            if when < 0:
                raise PoolError("fault plan times must be non-negative")
        for node, start, end in self.busy_periods:
            if not 0 <= node < node_count:
                raise PoolError(f"fault plan names unknown node {node}")
            if start < 0 or end < start:
                raise PoolError("busy periods need 0 <= start <= end")


@dataclass
class PoolConfig:
    node_count: int = 9
    slots_per_node: int = 8
    cpu_threshold_pct: float = 3.0
    required_idle_minutes: float = 15.0
    mode: Mode = Mode.SIMULATED
    sim_job_duration_s: float = 60.0
    poll_granularity_s: float = 1.0
    restart_delay_s: float = 30.0
    fault_plan: FaultPlan = field(default_factory=FaultPlan)

    @property
    def total_slots(self) -> int:
        return self.node_count * self.slots_per_node


@dataclass(frozen=True)
class JobView:
    cluster: int
    proc: int
    state: JobState
    hold_reason: str | None
    arguments: str
    output_path: str
    submitted: float
    started: float | None
    finished: float | None


@dataclass(frozen=True)
class QueueSnapshot:
    total: int
    idle: int
    running: int
    held: int
    completed: int
    removed: int
    jobs: tuple[JobView, ...]

    def __post_init__(self):
        parts = self.idle + self.running + self.held + self.completed + self.removed
        if parts != self.total:
            raise AssertionError("queue snapshot does not conserve job counts")


@dataclass(frozen=True)
class NodeState:
    node_id: int
    state: NodeActivity
    cpu_pct: float
    last_input_event_s: float
    running_jobs: int


@dataclass(frozen=True)
class JobContext:
    """What a payload gets to see about its job."""

    cluster: int
    proc: int
    arguments: str
    started: float


JobPayload = Callable[[JobContext], "str | None"]


def format_sim_time(t: float) -> str:
    return f"{t:.6f}".rstrip("0").rstrip(".")


def render_queue_summary(snapshot: QueueSnapshot) -> str:
    """Summary whose held count is the first word token after "running, "."""
    return (
        f"{snapshot.total} jobs; {snapshot.idle} idle, "
        f"{snapshot.running} running, {snapshot.held} held"
    )


class _Job:
    __slots__ = (
        "cluster", "proc", "state", "hold_reason", "arguments", "output_path",
        "submitted", "started", "finished", "node", "generation", "future",
    )

    def __init__(self, cluster, proc, arguments, output_path, submitted):
        self.cluster = cluster
        self.proc = proc
        self.state = JobState.IDLE
        self.hold_reason: str | None = None
        self.arguments = arguments
        self.output_path = output_path
        self.submitted = submitted
        self.started: float | None = None
        self.finished: float | None = None
        self.node: int | None = None
        self.generation = 0
        self.future: Future | None = None

    def view(self) -> JobView:
        return JobView(
            cluster=self.cluster, proc=self.proc, state=self.state,
            hold_reason=self.hold_reason, arguments=self.arguments,
            output_path=self.output_path, submitted=self.submitted,
            started=self.started, finished=self.finished,
        )


class _Node:
    __slots__ = ("node_id", "busy", "cpu_pct", "last_input", "restart_until", "running")

    def __init__(self, node_id):
        self.node_id = node_id
        self.busy = False
        self.cpu_pct = 0.0
        self.last_input = float("-inf")
        self.restart_until = float("-inf")
        self.running: set[tuple[int, int]] = set()


class Pool:
    """Coordinator for one pool instance; all mutations are serialized."""

    def __init__(self, config: PoolConfig | None = None, workdir: str | Path = "."):
        self.config = config or PoolConfig()
        if self.config.node_count < 1 or self.config.slots_per_node < 1:
            raise PoolError("pool needs at least one node and one slot per node")
        if self.config.mode is Mode.SIMULATED and self.config.sim_job_duration_s <= 0:
            raise PoolError("sim_job_duration_s must be positive")
        self.config.fault_plan.validate(self.config.node_count)
        self.workdir = Path(workdir)
        self._now = 0.0
        self._seq = 0
        self._events: list[tuple[float, int, str, tuple]] = []
        self._nodes = [_Node(i) for i in range(self.config.node_count)]
        self._jobs: dict[tuple[int, int], _Job] = {}
        self._payloads: dict[int, JobPayload | None] = {}
        self._next_cluster = 1
        self._transient_armed: set[tuple[int, int]] = set()
        self._unwritable: set[str] = set()
        self._lock = threading.RLock()
        self._executor: ThreadPoolExecutor | None = None
        self._log = open(self.workdir / "log", "a", encoding="utf-8")
        for node, when in self.config.fault_plan.node_restarts:
            self._push(when, "restart_begin", (node,))
        for node, start, end in self.config.fault_plan.busy_periods:
            self._push(start, "busy_begin", (node,))
            self._push(end, "busy_end", (node,))

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            if self._executor is not None:
                self._executor.shutdown(wait=False, cancel_futures=True)
                self._executor = None
            if not self._log.closed:
                self._log.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    @property
    def now(self) -> float:
        return self._now

    # -- operations --------------------------------------------------------

    def submit(self, desc, payload: JobPayload | None = None) -> tuple[int, int]:
        """Queue one job per stanza; pre-creates every output file empty."""
        with self._lock:
            if self.config.mode is Mode.REAL and payload is None:
                exe = desc.executable
                if not (os.path.isfile(exe) and os.access(exe, os.R_OK)):
                    raise PoolError(f"submission rejected: executable not readable: {exe}")
            cluster = self._next_cluster
            self._next_cluster += 1
            proc = 0
            for arguments, queue_count in desc.stanzas:
                for _ in range(queue_count):
                    output_path = str(
                        self.workdir / desc.output_template.replace("$(Process)", str(proc))
                    )
                    open(output_path, "w").close()
                    job = _Job(cluster, proc, arguments, output_path, self._now)
                    self._jobs[(cluster, proc)] = job
                    self._log_line(f"({cluster}.{proc}) SUBMITTED")
                    proc += 1
            for fault_proc, cause in self.config.fault_plan.hold_faults:
                if fault_proc >= proc:
                    continue
                if cause is HoldCause.TRANSIENT:
                    self._transient_armed.add((cluster, fault_proc))
                else:
                    path = self._jobs[(cluster, fault_proc)].output_path
                    self._unwritable.add(path)
                    os.chmod(path, 0o444)
            self._payloads[cluster] = payload
            return cluster, proc

    def query(self) -> QueueSnapshot:
        with self._lock:
            jobs = sorted(self._jobs.values(), key=lambda j: (j.cluster, j.proc))
            counts = {state: 0 for state in JobState}
            for job in jobs:
                counts[job.state] += 1
            return QueueSnapshot(
                total=len(jobs),
                idle=counts[JobState.IDLE],
                running=counts[JobState.RUNNING],
                held=counts[JobState.HELD],
                completed=counts[JobState.COMPLETED],
                removed=counts[JobState.REMOVED],
                jobs=tuple(job.view() for job in jobs),
            )

    def release(self, cluster: int) -> int:
        with self._lock:
            self._require_cluster(cluster)
            released = 0
            for job in self._sorted_jobs():
                if job.cluster == cluster and job.state is JobState.HELD:
                    job.state = JobState.IDLE
                    job.hold_reason = None
                    self._log_line(f"({job.cluster}.{job.proc}) RELEASED")
                    released += 1
            return released

    def remove(self, cluster: int, proc: int | None = None) -> int:
        with self._lock:
            self._require_cluster(cluster)
            removed = 0
            for job in self._sorted_jobs():
                if job.cluster != cluster:
                    continue
                if proc is not None and job.proc != proc:
                    continue
                if job.state in (JobState.COMPLETED, JobState.REMOVED):
                    continue
                if job.state is JobState.RUNNING:
                    self._detach_running(job)
                job.state = JobState.REMOVED
                job.finished = self._now
                self._log_line(f"({job.cluster}.{job.proc}) REMOVED")
                removed += 1
            return removed

    def pool_status(self) -> list[NodeState]:
        with self._lock:
            return [
                NodeState(
                    node_id=node.node_id,
                    state=self._activity(node),
                    cpu_pct=node.cpu_pct,
                    last_input_event_s=node.last_input,
                    running_jobs=len(node.running),
                )
                for node in self._nodes
            ]

    def restart_nodes(self, node_ids) -> None:
        with self._lock:
            for node_id in node_ids:
                if not 0 <= node_id < len(self._nodes):
                    raise PoolError(f"unknown node id {node_id}")
            for node_id in node_ids:
                self._begin_restart(node_id)

    def repair_output_permissions(self) -> int:
        """chmod 777 every output.* in the working directory; clears hold gates."""
        with self._lock:
            repaired = 0
            for path in sorted(self.workdir.glob("output.*")):
                os.chmod(path, 0o777)
                repaired += 1
            self._unwritable.clear()
            return repaired

    def advance(self, until: float | None = None) -> float:
        """Run the event loop to simulated time ``until``, or to quiescence.

        Quiescent (``until=None``) means no Idle or Running jobs remain; held
        and terminal jobs may exist.
        """
        with self._lock:
            start = self._now
            while True:
                # apply everything due at this instant before matching, so a
                # node busy from t is never handed a job at exactly t
                while self._events and self._events[0][0] <= self._now:
                    _, _, kind, data = heapq.heappop(self._events)
                    self._apply_event(kind, data)
                self._match_jobs()
                if until is None:
                    if not self._has_live_jobs():
                        break
                    if not self._events:
                        raise PoolError(
                            "pool cannot make progress: idle jobs but no eligible "
                            "slots and no pending events"
                        )
                elif not self._events or self._events[0][0] > until:
                    self._now = max(self._now, until)
                    break
                self._now = self._events[0][0]
            return self._now - start

    # -- internals ---------------------------------------------------------

    def _sorted_jobs(self):
        return sorted(self._jobs.values(), key=lambda j: (j.cluster, j.proc))

    def _require_cluster(self, cluster: int) -> None:
        if not any(job.cluster == cluster for job in self._jobs.values()):
            raise PoolError(f"unknown cluster {cluster}")

    def _has_live_jobs(self) -> bool:
        return any(j.state in (JobState.IDLE, JobState.RUNNING) for j in self._jobs.values())

    def _push(self, when: float, kind: str, data: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._events, (when, self._seq, kind, data))

    def _log_line(self, text: str) -> None:
        self._log.write(f"{format_sim_time(self._now)} {text}\n")
        self._log.flush()

    def _activity(self, node: _Node) -> NodeActivity:
        if node.busy or node.restart_until > self._now:
            return NodeActivity.BUSY
        if node.running:
            return NodeActivity.CLAIMED
        return NodeActivity.UNCLAIMED

    def _node_schedulable(self, node: _Node) -> bool:
        # pool jobs do not count as user activity: a node claimed by the pool
        # keeps offering its remaining slots
        idle_for = self._now - node.last_input
        return (
            node.restart_until <= self._now
            and not node.busy
            and node.cpu_pct < self.config.cpu_threshold_pct
            and idle_for >= self.config.required_idle_minutes * 60.0
        )

    def _free_slots(self, node: _Node) -> int:
        return self.config.slots_per_node - len(node.running)

    def _match_jobs(self) -> None:
        idle_jobs = [j for j in self._sorted_jobs() if j.state is JobState.IDLE]
        if not idle_jobs:
            return
        for job in idle_jobs:
            key = (job.cluster, job.proc)
            if key in self._transient_armed:
                self._transient_armed.discard(key)
                self._hold(job, "transient fault injected")
                continue
            if job.output_path in self._unwritable:
                self._hold(job, f"output file not writable: {os.path.basename(job.output_path)}")
                continue
            node = self._next_free_node()
            if node is None:
                break  # strict FIFO: the head of the queue never gets jumped
            self._start(job, node)

    def _next_free_node(self) -> _Node | None:
        for node in self._nodes:
            if self._node_schedulable(node) and self._free_slots(node) > 0:
                return node
        return None

    def _hold(self, job: _Job, reason: str) -> None:
        job.state = JobState.HELD
        job.hold_reason = reason
        self._log_line(f"({job.cluster}.{job.proc}) HELD {reason}")

    def _start(self, job: _Job, node: _Node) -> None:
        job.state = JobState.RUNNING
        job.node = node.node_id
        job.started = self._now
        job.generation += 1
        node.running.add((job.cluster, job.proc))
        self._log_line(f"({job.cluster}.{job.proc}) STARTED")
        if self.config.mode is Mode.SIMULATED:
            duration = self.config.sim_job_duration_s
        else:
            duration = REAL_NOMINAL_DURATION_S
            payload = self._payloads.get(job.cluster)
            if payload is not None:
                context = JobContext(job.cluster, job.proc, job.arguments, job.started)
                job.future = self._workers().submit(payload, context)
        self._push(self._now + duration, "finish", (job.cluster, job.proc, job.generation))

    def _workers(self) -> ThreadPoolExecutor:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(
                max_workers=self.config.total_slots,
                thread_name_prefix="crushpool-worker",
            )
        return self._executor

    def _detach_running(self, job: _Job) -> None:
        job.generation += 1  # invalidates the pending finish event
        if job.future is not None:
            job.future.cancel()
            job.future = None
        if job.node is not None:
            self._nodes[job.node].running.discard((job.cluster, job.proc))
            job.node = None

    def _preempt_node_jobs(self, node: _Node) -> None:
        for key in sorted(node.running):
            job = self._jobs[key]
            self._detach_running(job)
            job.state = JobState.IDLE
            self._log_line(f"({job.cluster}.{job.proc}) PREEMPTED")

    def _begin_restart(self, node_id: int) -> None:
        node = self._nodes[node_id]
        self._log_line(f"node {node_id} RESTARTED")
        self._preempt_node_jobs(node)
        node.restart_until = self._now + self.config.restart_delay_s
        self._push(node.restart_until, "restart_end", (node_id,))

    def _apply_event(self, kind: str, data: tuple) -> None:
        if kind == "finish":
            self._finish(*data)
        elif kind == "restart_begin":
            self._begin_restart(data[0])
        elif kind == "restart_end":
            node = self._nodes[data[0]]
            if node.restart_until <= self._now:
                self._log_line(f"node {node.node_id} UNCLAIMED")
        elif kind == "busy_begin":
            node = self._nodes[data[0]]
            node.busy = True
            node.cpu_pct = 100.0
            node.last_input = self._now
            self._log_line(f"node {node.node_id} BUSY")
            self._preempt_node_jobs(node)
        elif kind == "busy_end":
            node = self._nodes[data[0]]
            node.busy = False
            node.cpu_pct = 0.0
            node.last_input = self._now
            self._log_line(f"node {node.node_id} UNCLAIMED")
            # wake the matcher once the idle window has elapsed
            self._push(self._now + self.config.required_idle_minutes * 60.0, "wake", ())
        elif kind == "wake":
            pass  # only forces a matching pass at this time
        else:  # pragma: no cover
            raise AssertionError(f"unknown event kind {kind}")

    def _finish(self, cluster: int, proc: int, generation: int) -> None:
        job = self._jobs[(cluster, proc)]
        if job.state is not JobState.RUNNING or job.generation != generation:
            return  # stale event from a preempted or removed incarnation
        if job.node is not None:
            self._nodes[job.node].running.discard((cluster, proc))
            job.node = None
        payload = self._payloads.get(cluster)
        content: str | None = None
        error: Exception | None = None
        if self.config.mode is Mode.REAL:
            if job.future is not None:
                try:
                    content = job.future.result()
                except Exception as exc:  # worker crash becomes a hold
                    error = exc
                job.future = None
        elif payload is not None:
            context = JobContext(cluster, proc, job.arguments, job.started or 0.0)
            try:
                content = payload(context)
            except Exception as exc:
                error = exc
        if error is not None:
            self._hold(job, f"worker error: {error}")
            return
        if content is not None:
            self._write_atomic(job.output_path, content)
        job.state = JobState.COMPLETED
        job.finished = self._now
        self._log_line(f"({cluster}.{proc}) COMPLETED")

    @staticmethod
    def _write_atomic(path: str, content: str) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8", newline="") as handle:
            handle.write(content)
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# log replay, for the passive CLI views (q / watch / status / release / rm)

_JOB_LINE = re.compile(r"^(\S+) \((\d+)\.(\d+)\) (\w+)(?: (.*))?$")
_NODE_LINE = re.compile(r"^(\S+) node (\d+) (\w+)$")


@dataclass(frozen=True)
class LogEvent:
    time: float
    kind: str                 # "job" or "node"
    cluster: int = 0
    proc: int = 0
    event: str = ""
    detail: str = ""
    node: int = 0


def parse_log_events(path: str | Path) -> list[LogEvent]:
    events: list[LogEvent] = []
    with open(path, encoding="utf-8") as handle:
        for raw in handle:
            line = raw.rstrip("\n")
            if not line:
                continue
            job = _JOB_LINE.match(line)
            if job:
                events.append(LogEvent(
                    time=float(job.group(1)), kind="job",
                    cluster=int(job.group(2)), proc=int(job.group(3)),
                    event=job.group(4), detail=job.group(5) or "",
                ))
                continue
            node = _NODE_LINE.match(line)
            if node:
                events.append(LogEvent(
                    time=float(node.group(1)), kind="node",
                    node=int(node.group(2)), event=node.group(3),
                ))
    return events


_EVENT_TO_STATE = {
    "SUBMITTED": JobState.IDLE,
    "STARTED": JobState.RUNNING,
    "PREEMPTED": JobState.IDLE,
    "RELEASED": JobState.IDLE,
    "HELD": JobState.HELD,
    "COMPLETED": JobState.COMPLETED,
    "REMOVED": JobState.REMOVED,
}


def replay_queue_snapshot(path: str | Path) -> QueueSnapshot:
    """Rebuild the queue state from the append-only event log."""
    jobs: dict[tuple[int, int], dict] = {}
    for ev in parse_log_events(path):
        if ev.kind != "job":
            continue
        state = _EVENT_TO_STATE.get(ev.event)
        if state is None:
            continue
        record = jobs.setdefault(
            (ev.cluster, ev.proc),
            {"submitted": ev.time, "started": None, "finished": None, "reason": None},
        )
        record["state"] = state
        if ev.event == "STARTED":
            record["started"] = ev.time
        elif ev.event in ("COMPLETED", "REMOVED"):
            record["finished"] = ev.time
        record["reason"] = ev.detail if ev.event == "HELD" else None
    views = []
    counts = {state: 0 for state in JobState}
    for (cluster, proc), record in sorted(jobs.items()):
        counts[record["state"]] += 1
        views.append(JobView(
            cluster=cluster, proc=proc, state=record["state"],
            hold_reason=record["reason"], arguments="",
            output_path=f"output.{proc}", submitted=record["submitted"],
            started=record["started"], finished=record["finished"],
        ))
    return QueueSnapshot(
        total=len(views),
        idle=counts[JobState.IDLE],
        running=counts[JobState.RUNNING],
        held=counts[JobState.HELD],
        completed=counts[JobState.COMPLETED],
        removed=counts[JobState.REMOVED],
        jobs=tuple(views),
    )


def replay_node_states(path: str | Path, node_count: int) -> list[NodeState]:
    """Last known per-node activity from the log's node events."""
    activity = {i: NodeActivity.UNCLAIMED for i in range(node_count)}
    for ev in parse_log_events(path):
        if ev.kind != "node" or ev.node >= node_count:
            continue
        if ev.event in ("BUSY", "RESTARTED"):
            activity[ev.node] = NodeActivity.BUSY
        elif ev.event == "UNCLAIMED":
            activity[ev.node] = NodeActivity.UNCLAIMED
    return [
        NodeState(node_id=i, state=activity[i], cpu_pct=0.0,
                  last_input_event_s=float("-inf"), running_jobs=0)
        for i in range(node_count)
    ]
