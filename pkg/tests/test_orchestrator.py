from pathlib import Path

import pytest

from crushpool.generators import GeneratorKind, GeneratorSpec
from crushpool.orchestrator import (
    OrchestratorError,
    RunConfig,
    compute_wave_count,
    run_master,
    verify_equivalence,
)
from crushpool.pool import FaultPlan, HoldCause, Mode, PoolConfig


def run_config(tmp_path, battery="smallcrush", seed=42, **pool_kw):
    pool_kw.setdefault("mode", Mode.REAL)
    return RunConfig(
        generator=GeneratorSpec(GeneratorKind.MINSTD, seed=seed),
        battery=battery,
        dest_dir=str(tmp_path / "dest"),
        poll_interval_s=6.0,
        pool=PoolConfig(**pool_kw),
    )


def test_wave_count_table():
    assert compute_wave_count(107, 40) == 3
    assert compute_wave_count(107, 70) == 2
    assert compute_wave_count(107, 90) == 2
    assert compute_wave_count(107, 107) == 1
    assert compute_wave_count(11, 72) == 1
    with pytest.raises(OrchestratorError):
        compute_wave_count(10, 0)


def test_poll_interval_must_be_positive(tmp_path):
    with pytest.raises(OrchestratorError):
        RunConfig(
            generator=GeneratorSpec(GeneratorKind.MINSTD),
            battery="smallcrush",
            dest_dir=str(tmp_path),
            poll_interval_s=0.0,
        )


def test_run_master_smallcrush(completed_smallcrush_run):
    workdir, dest, cfg, report = completed_smallcrush_run
    assert report.completed
    assert report.cluster == 1
    assert report.wave_count == 1  # 11 jobs on 72 slots
    assert report.held_events == 0
    assert (workdir / "results.txt").is_file()
    assert (dest / "results.txt").is_file()


def test_run_master_prints_script_milestones(tmp_path, minstd_spec):
    lines = []
    workdir = tmp_path / "w"
    workdir.mkdir()
    cfg = RunConfig(generator=minstd_spec, battery="smallcrush",
                    dest_dir=str(tmp_path / "d"), poll_interval_s=6.0,
                    pool=PoolConfig(mode=Mode.REAL))
    run_master(cfg, workdir=workdir, echo=lines.append)
    assert "making HTCondor submit file" in lines
    assert "submitting to HTCondor" in lines
    assert "Condor Cluster Number : 1" in lines
    assert "files generated" in lines
    assert "Joining all output files" in lines
    assert "files joined, results.txt generated" in lines
    assert any("Testing complete. Results are in results.txt" in line for line in lines)


def test_run_master_directory_hygiene(completed_smallcrush_run):
    workdir, _, _, _ = completed_smallcrush_run
    leftover = sorted(p.name for p in workdir.iterdir())
    assert leftover == ["results.txt", "stats.txt"]


def test_held_jobs_are_repaired_and_released(tmp_path, minstd_spec):
    workdir = tmp_path / "w"
    workdir.mkdir()
    plan = FaultPlan(hold_faults=((2, HoldCause.TRANSIENT), (5, HoldCause.OUTPUT_NOT_WRITABLE)))
    cfg = RunConfig(generator=minstd_spec, battery="smallcrush",
                    dest_dir=str(tmp_path / "d"), poll_interval_s=6.0,
                    pool=PoolConfig(mode=Mode.REAL, fault_plan=plan))
    lines = []
    report = run_master(cfg, workdir=workdir, echo=lines.append)
    assert report.completed
    assert report.held_events >= 2
    assert "held tests released" in lines
    assert verify_equivalence(cfg, workdir=workdir)


def test_simulated_run_wall_time_is_virtual(tmp_path, minstd_spec):
    workdir = tmp_path / "w"
    workdir.mkdir()
    cfg = RunConfig(generator=minstd_spec, battery="smallcrush",
                    dest_dir=str(tmp_path / "d"), poll_interval_s=12.0,
                    pool=PoolConfig(mode=Mode.SIMULATED, sim_job_duration_s=60.0))
    report = run_master(cfg, workdir=workdir, echo=lambda _: None)
    assert report.completed
    assert report.wall_time_s == 60.0  # one 60 s wave, observed at the 60 s poll
    assert report.submit_host_busy_s < 1.0


def test_verify_equivalence_true_for_completed_run(completed_smallcrush_run):
    workdir, _, cfg, _ = completed_smallcrush_run
    assert verify_equivalence(cfg, workdir=workdir)


def test_verify_equivalence_detects_tampering(completed_smallcrush_run):
    workdir, _, cfg, _ = completed_smallcrush_run
    results = workdir / "results.txt"
    blob = bytearray(results.read_bytes())
    blob[len(blob) // 2] ^= 0x01
    results.write_bytes(bytes(blob))
    assert not verify_equivalence(cfg, workdir=workdir)


def test_verify_equivalence_detects_seed_mismatch(completed_smallcrush_run):
    workdir, _, cfg, _ = completed_smallcrush_run
    other = RunConfig(
        generator=GeneratorSpec(GeneratorKind.MINSTD, seed=43),
        battery=cfg.battery, dest_dir=cfg.dest_dir,
        poll_interval_s=cfg.poll_interval_s, pool=cfg.pool,
    )
    assert not verify_equivalence(other, workdir=workdir)


def test_verify_equivalence_requires_results(tmp_path, minstd_spec):
    cfg = run_config(tmp_path)
    with pytest.raises(OrchestratorError, match="results.txt"):
        verify_equivalence(cfg, workdir=tmp_path)


def test_node_restart_mid_run_still_completes(tmp_path, minstd_spec):
    workdir = tmp_path / "w"
    workdir.mkdir()
    plan = FaultPlan(node_restarts=tuple((node, 30.0) for node in range(2)))
    cfg = RunConfig(generator=minstd_spec, battery="smallcrush",
                    dest_dir=str(tmp_path / "d"), poll_interval_s=12.0,
                    pool=PoolConfig(node_count=2, slots_per_node=4, mode=Mode.SIMULATED,
                                    sim_job_duration_s=60.0, restart_delay_s=20.0,
                                    fault_plan=plan))
    report = run_master(cfg, workdir=workdir, echo=lambda _: None)
    assert report.completed
    assert verify_equivalence(cfg, workdir=workdir)
    log = (Path(cfg.dest_dir) / "log").read_text()
    assert "PREEMPTED" in log


def test_wave_count_measured_from_log(tmp_path, minstd_spec):
    workdir = tmp_path / "w"
    workdir.mkdir()
    cfg = RunConfig(generator=minstd_spec, battery="smallcrush",
                    dest_dir=str(tmp_path / "d"), poll_interval_s=12.0,
                    pool=PoolConfig(node_count=1, slots_per_node=4, mode=Mode.SIMULATED,
                                    sim_job_duration_s=60.0))
    report = run_master(cfg, workdir=workdir, echo=lambda _: None)
    assert report.wave_count == 3  # ceil(11 / 4)
    assert report.wall_time_s == 180.0
