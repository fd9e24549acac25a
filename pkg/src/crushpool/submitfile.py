"""Submission-file codec and the cluster-acknowledgement line.

The generated format is byte-exact: a four-line header, a blank line, then
one stanza per job (``Arguments = <counter> <battery_code>``, ``Queue``,
blank line). The ack line mirrors real condor_submit phrasing because the
scrape rule (first word token after "cluster") depends on it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .battery import battery_spec


class SubmitParseError(ValueError):
    """Malformed submission file or ack line."""


@dataclass(frozen=True)
class SubmitDescription:
    executable: str
    universe: str = "vanilla"
    log_name: str = "log"
    output_template: str = "output.$(Process)"
    stanzas: tuple[tuple[str, int], ...] = ()  # (arguments, queue_count)
    extras: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    @property
    def job_count(self) -> int:
        return sum(count for _, count in self.stanzas)


def build_battery_submit(executable: str, battery: str) -> SubmitDescription:
    """Description for a battery run: one single-queue stanza per job."""
    spec = battery_spec(battery)
    stanzas = tuple((f"{counter} {spec.code}", 1) for counter in range(spec.job_count))
    return SubmitDescription(executable=executable, stanzas=stanzas)


def render_submit(desc: SubmitDescription) -> str:
    lines = [
        f"Universe = {desc.universe}",
        f"Executable = {desc.executable}",
        f"Log = {desc.log_name}",
        f"Output = {desc.output_template}",
        "",
    ]
    for arguments, queue_count in desc.stanzas:
        lines.append(f"Arguments = {arguments}")
        lines.append("Queue" if queue_count == 1 else f"Queue {queue_count}")
        lines.append("")
    return "\n".join(lines) + "\n"


def generate_submit(executable: str, battery: str) -> str:
    """The submission file makesub would emit for this executable and battery."""
    return render_submit(build_battery_submit(executable, battery))


_QUEUE_RE = re.compile(r"^queue(?:\s+(\d+))?$", re.IGNORECASE)


def parse_submit(text: str) -> SubmitDescription:
    """Parse a submission file; unknown ``Key = value`` lines are kept in extras."""
    universe = "vanilla"
    executable: str | None = None
    log_name = "log"
    output_template = "output.$(Process)"
    stanzas: list[tuple[str, int]] = []
    extras: list[tuple[str, str]] = []
    pending_arguments = ""

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        queue = _QUEUE_RE.match(line)
        if queue:
            if executable is None:
                raise SubmitParseError(f"line {lineno}: Queue before any Executable line")
            count = int(queue.group(1)) if queue.group(1) else 1
            if count < 1:
                raise SubmitParseError(f"line {lineno}: Queue count must be positive")
            stanzas.append((pending_arguments, count))
            pending_arguments = ""
            continue
        if "=" not in line:
            raise SubmitParseError(f"line {lineno}: expected 'Key = value', 'Queue', or blank: {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        lowered = key.lower()
        if lowered == "universe":
            universe = value
        elif lowered == "executable":
            executable = value
        elif lowered == "log":
            log_name = value
        elif lowered == "output":
            output_template = value
        elif lowered == "arguments":
            pending_arguments = value
        else:
            extras.append((key, value))

    if executable is None:
        raise SubmitParseError("no Executable line in submission file")
    return SubmitDescription(
        executable=executable,
        universe=universe,
        log_name=log_name,
        output_template=output_template,
        stanzas=tuple(stanzas),
        extras=tuple(extras),
    )


def format_submit_ack(jobs: int, cluster: int) -> str:
    return f"{jobs} job(s) submitted to cluster {cluster}."


_CLUSTER_RE = re.compile(r"cluster\s+(\w+)")


def parse_cluster_id(text: str) -> int:
    """First word token following "cluster" and whitespace."""
    match = _CLUSTER_RE.search(text)
    if not match:
        raise SubmitParseError("no cluster id in submit output")
    token = match.group(1)
    if not token.isdigit():
        raise SubmitParseError(f"cluster token is not a number: {token!r}")
    return int(token)
