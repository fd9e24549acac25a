"""End-to-end run control: generate, submit, poll, repair-release, stitch.

The poll loop checks the output files on a fixed cadence, and when any job
is held it repairs output-file permissions and releases the whole cluster;
the repair is idempotent, so it is attempted on every held poll regardless
of cause. Wave counts are measured from the event log rather than computed
from the slot arithmetic, so faults and busy nodes show their real effect.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .battery import BatterySpec, battery_spec, run_single_test
from .generators import GeneratorSpec, effective_seed_for
from .monitor import check_outputs
from .pool import JobContext, Mode, Pool, PoolConfig, parse_log_events
from .stitch import (
    JobMeta,
    assemble_results,
    assemble_stats,
    parse_job_output,
    render_job_output,
    stitch_results,
)
from .submitfile import format_submit_ack, generate_submit, parse_cluster_id, parse_submit

SUBMIT_FILE_NAME = "runTest"


class OrchestratorError(RuntimeError):
    """A run that cannot proceed (bad state, missing results)."""


@dataclass
class RunConfig:
    generator: GeneratorSpec
    battery: str
    dest_dir: str
    poll_interval_s: float = 12.0
    pool: PoolConfig = field(default_factory=PoolConfig)

    def __post_init__(self):
        if self.poll_interval_s <= 0:
            raise OrchestratorError("poll_interval_s must be positive")


@dataclass(frozen=True)
class RunReport:
    cluster: int
    completed: bool
    wall_time_s: float
    submit_host_busy_s: float
    wave_count: int
    held_events: int
    results_path: Path | None
    stats_path: Path | None


def compute_wave_count(jobs: int, slots: int) -> int:
    """ceil(jobs / slots): cohorts needed when every job runs one duration."""
    if slots < 1:
        raise OrchestratorError("slot count must be at least 1")
    return math.ceil(jobs / slots)


def render_job_document(
    spec: BatterySpec, proc: int, gen_spec: GeneratorSpec, started: float | str
) -> str:
    """The exact document job `proc` writes; also the sequential reference."""
    meta = JobMeta(
        battery_name=spec.name,
        proc=proc,
        generator_name=gen_spec.display(),
        effective_seed=effective_seed_for(gen_spec, proc),
        started=started,
    )
    if spec.code != 0 and proc == 0:
        return render_job_output(None, meta)  # Crush/BigCrush header job
    outcome = run_single_test(spec, proc, gen_spec)
    return render_job_output(outcome, meta)


def make_battery_payload(spec: BatterySpec, gen_spec: GeneratorSpec):
    """Worker entry point: invoked with the stanza arguments '<index> <code>'."""

    def payload(ctx: JobContext) -> str:
        parts = ctx.arguments.split()
        if len(parts) != 2:
            raise ValueError(f"expected '<test_index> <battery_code>', got {ctx.arguments!r}")
        index, code = int(parts[0]), int(parts[1])
        if code != spec.code:
            raise ValueError(f"battery code mismatch: job says {code}, pool runs {spec.code}")
        if index != ctx.proc:
            raise ValueError(f"argument index {index} does not match proc {ctx.proc}")
        return render_job_document(spec, index, gen_spec, ctx.started)

    return payload


def _measure_from_log(log_path: Path) -> tuple[int, int]:
    start_times: set[float] = set()
    held = 0
    if log_path.is_file():
        for event in parse_log_events(log_path):
            if event.kind != "job":
                continue
            if event.event == "STARTED":
                start_times.add(event.time)
            elif event.event == "HELD":
                held += 1
    return len(start_times), held


def run_master(cfg: RunConfig, workdir: str | Path = ".", echo: Callable[[str], None] = print) -> RunReport:
    """The full pipeline; prints the same milestones the shell original did."""
    base = Path(workdir)
    spec = battery_spec(cfg.battery)
    t_wall = time.perf_counter()
    busy = 0.0
    t_section = time.perf_counter()

    echo("making HTCondor submit file")
    submit_text = generate_submit(cfg.generator.display(), cfg.battery)
    submit_path = base / SUBMIT_FILE_NAME
    submit_path.write_text(submit_text, encoding="utf-8", newline="")

    echo("")
    echo("submitting to HTCondor")
    pool = Pool(cfg.pool, workdir=base)
    try:
        desc = parse_submit(submit_path.read_text(encoding="utf-8"))
        cluster, job_count = pool.submit(desc, payload=make_battery_payload(spec, cfg.generator))
        ack = format_submit_ack(job_count, cluster)
        cluster_id = parse_cluster_id(ack)
        echo(f"Condor Cluster Number : {cluster_id}")
        echo("")
        echo("checking for output files")
        echo("This may take some time, files are written after")
        echo("their corresponding tests have finished running")

        completed = False
        while True:
            status = check_outputs(base, cfg.battery)
            if status.complete:
                echo("files generated")
                completed = True
                break
            snapshot = pool.query()
            if snapshot.held != 0:
                pool.repair_output_permissions()
                pool.release(cluster_id)
                echo("")
                echo("held tests released")
            elif snapshot.idle + snapshot.running == 0:
                break  # nothing left that could ever write the missing files
            busy += time.perf_counter() - t_section
            pool.advance(until=pool.now + cfg.poll_interval_s)
            t_section = time.perf_counter()
            echo(" .")

        results_path = stats_path = None
        if completed:
            echo("")
            echo("Joining all output files")
            report = stitch_results(base, cfg.battery, cfg.dest_dir, echo=echo)
            results_path, stats_path = report.results_path, report.stats_path
            echo("files joined, results.txt generated")
            echo("cleaning up directory")
            submit_path.unlink(missing_ok=True)
            echo("")
            echo("*******************************************************")
            echo("Testing complete. Results are in results.txt which is ")
            echo(f"located in your current directory as well as in {cfg.dest_dir}")
            echo("*******************************************************")

        busy += time.perf_counter() - t_section
        virtual_elapsed = pool.now
    finally:
        pool.close()

    log_path = Path(cfg.dest_dir) / "log" if completed else base / "log"
    wave_count, held_events = _measure_from_log(log_path)
    wall = virtual_elapsed if cfg.pool.mode is Mode.SIMULATED else time.perf_counter() - t_wall
    return RunReport(
        cluster=cluster,
        completed=completed,
        wall_time_s=wall,
        submit_host_busy_s=busy,
        wave_count=max(wave_count, 1) if completed else wave_count,
        held_events=held_events,
        results_path=results_path,
        stats_path=stats_path,
    )


def _started_value(results_text: str) -> str:
    for line in results_text.splitlines()[:6]:
        if line.startswith("started: "):
            return line[len("started: "):]
    raise OrchestratorError("results.txt header has no started line")


def verify_equivalence(cfg: RunConfig, workdir: str | Path = ".") -> bool:
    """Byte-compare a distributed run against a fresh in-process recompute.

    The reference is rendered through the identical formatter and stitch
    assembly. Job start times vary with scheduling and are not part of test
    accuracy, so the reference header reuses the actual run's started value
    (only output.0's header survives stitching).
    """
    base = Path(workdir)
    results_path = base / "results.txt"
    stats_path = base / "stats.txt"
    if not results_path.is_file():
        raise OrchestratorError(f"no results.txt in {base}; run the pipeline first")
    actual_results = results_path.read_text(encoding="utf-8")
    actual_stats = stats_path.read_text(encoding="utf-8") if stats_path.is_file() else ""

    spec = battery_spec(cfg.battery)
    started = _started_value(actual_results)
    docs = [
        parse_job_output(render_job_document(spec, proc, cfg.generator, started))
        for proc in range(spec.job_count)
    ]
    reference_results = assemble_results(docs, spec)
    reference_stats = assemble_stats(docs, spec)
    return reference_results == actual_results and reference_stats == actual_stats
