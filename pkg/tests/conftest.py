import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles helper module

from crushpool.generators import GeneratorKind, GeneratorSpec
from crushpool.orchestrator import RunConfig, run_master
from crushpool.pool import Mode, PoolConfig


@pytest.fixture
def minstd_spec():
    return GeneratorSpec(GeneratorKind.MINSTD, seed=42)


@pytest.fixture
def completed_smallcrush_run(tmp_path, minstd_spec):
    """A finished Real-mode SmallCrush run: (workdir, dest_dir, RunConfig, RunReport)."""
    workdir = tmp_path / "work"
    workdir.mkdir()
    dest = tmp_path / "dest"
    cfg = RunConfig(
        generator=minstd_spec,
        battery="smallcrush",
        dest_dir=str(dest),
        poll_interval_s=6.0,
        pool=PoolConfig(mode=Mode.REAL),
    )
    report = run_master(cfg, workdir=workdir, echo=lambda _: None)
    assert report.completed
    return workdir, dest, cfg, report
