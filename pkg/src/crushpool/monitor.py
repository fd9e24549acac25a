"""Completion check over the per-job output files.

A file counts as done only when it exists and has size > 0; the pool
pre-creates every output empty at submit and writes atomically, so a
non-empty file is always a finished one. The whole expected index range is
examined, so non-contiguous directories are counted correctly rather than
stopping at the first gap.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .battery import battery_spec


class MonitorError(OSError):
    """The output directory itself cannot be read (distinct from Incomplete)."""


class CompletionState(Enum):
    COMPLETE = "Complete"
    INCOMPLETE = "Incomplete"


@dataclass(frozen=True)
class CompletionStatus:
    state: CompletionState
    done: int
    expected: int
    message: str

    @property
    def complete(self) -> bool:
        return self.state is CompletionState.COMPLETE

    @property
    def exit_code(self) -> int:
        return 0 if self.complete else 1


def check_outputs(directory: str | Path, battery: str) -> CompletionStatus:
    """Count non-empty output.<i> files for every expected job index."""
    spec = battery_spec(battery)
    expected = spec.job_count
    base = Path(directory)
    if not base.is_dir() or not os.access(base, os.R_OK):
        raise MonitorError(f"cannot read output directory: {base}")
    done = 0
    for index in range(expected):
        path = base / f"output.{index}"
        try:
            if path.is_file() and path.stat().st_size > 0:
                done += 1
        except OSError:
            pass  # a vanishing file counts as not done
    if done == expected:
        return CompletionStatus(CompletionState.COMPLETE, done, expected, "")
    return CompletionStatus(
        CompletionState.INCOMPLETE, done, expected, f"{done}/{expected} files generated"
    )
