"""Single executable exposing every pipeline stage as a subcommand.

Exit codes: 0 success, 1 incomplete/failed check, 2 usage error. The
passive views (q, watch, status) and the record-level release/rm work from
the append-only event log in the current directory; live scheduling control
is in-process only (there is no daemon).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import battery, monitor, orchestrator, pool, report, stitch, submitfile
from .generators import ConfigurationError, parse_generator

_CONFIG_KEYS = {
    "node_count": int,
    "slots_per_node": int,
    "cpu_threshold_pct": float,
    "required_idle_minutes": float,
    "sim_job_duration_s": float,
    "poll_granularity_s": float,
    "restart_delay_s": float,
}


class _UsageError(ValueError):
    pass


def _load_config_file(path: str) -> dict:
    """Plain ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        caster = _CONFIG_KEYS.get(key)
        if caster is None:
            raise _UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = caster(value.strip())
    return values


def _parse_fault(text: str) -> tuple[str, tuple]:
    parts = text.split(":")
    try:
        if parts[0] == "hold" and len(parts) == 3:
            cause = {
                "transient": pool.HoldCause.TRANSIENT,
                "output": pool.HoldCause.OUTPUT_NOT_WRITABLE,
            }[parts[2]]
            return "hold", (int(parts[1]), cause)
        if parts[0] == "restart" and len(parts) == 3:
            return "restart", (int(parts[1]), float(parts[2]))
        if parts[0] == "busy" and len(parts) == 4:
            return "busy", (int(parts[1]), float(parts[2]), float(parts[3]))
    except (KeyError, ValueError):
        pass
    raise _UsageError(
        f"bad fault spec {text!r} (use hold:<proc>:transient|output, "
        "restart:<node>:<time>, or busy:<node>:<start>:<end>)"
    )


def _pool_config(args) -> pool.PoolConfig:
    values = _load_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = pool.PoolConfig(**values)
    if getattr(args, "nodes", None) is not None:
        cfg.node_count = args.nodes
    if getattr(args, "slots_per_node", None) is not None:
        cfg.slots_per_node = args.slots_per_node
    if getattr(args, "slots", None) is not None:
        cfg.node_count = 1
        cfg.slots_per_node = args.slots
    cfg.mode = pool.Mode.SIMULATED if args.simulated else pool.Mode.REAL
    if args.duration is not None:
        cfg.sim_job_duration_s = args.duration
    # a fresh pool schedules immediately; user activity still resets the timer
    cfg.required_idle_minutes = getattr(args, "idle_minutes", None) or cfg.required_idle_minutes
    holds, restarts, busies = [], [], []
    for spec in getattr(args, "fault", None) or []:
        kind, data = _parse_fault(spec)
        (holds if kind == "hold" else restarts if kind == "restart" else busies).append(data)
    cfg.fault_plan = pool.FaultPlan(
        hold_faults=tuple(holds), node_restarts=tuple(restarts), busy_periods=tuple(busies)
    )
    return cfg


def _cmd_run(args) -> int:
    gen = parse_generator(args.generator, seed=args.seed)
    cfg = orchestrator.RunConfig(
        generator=gen,
        battery=args.battery,
        dest_dir=args.dest_dir,
        poll_interval_s=args.poll,
        pool=_pool_config(args),
    )
    run_report = orchestrator.run_master(cfg)
    if run_report.completed and args.figures:
        for path in report.write_report(cfg.dest_dir):
            print(f"report: {path}")
    print(f"waves: {run_report.wave_count}  held events: {run_report.held_events}")
    print(f"wall time: {run_report.wall_time_s:.3f}s  submit host busy: "
          f"{run_report.submit_host_busy_s:.3f}s")
    return 0 if run_report.completed else 1


def _cmd_makesub(args) -> int:
    sys.stdout.write(submitfile.generate_submit(args.executable, args.battery))
    return 0


def _cmd_check(args) -> int:
    status = monitor.check_outputs(".", args.battery)
    if not status.complete:
        sys.stdout.write(status.message)  # deliberately no trailing newline
        sys.stdout.flush()
    return status.exit_code


def _cmd_stitch(args) -> int:
    stitch.stitch_results(".", args.battery, args.dest_dir, echo=print)
    return 0


def _render_queue(path: Path) -> str:
    if not path.is_file():
        return pool.render_queue_summary(pool.QueueSnapshot(0, 0, 0, 0, 0, 0, ()))
    return pool.render_queue_summary(pool.replay_queue_snapshot(path))


def _cmd_q(_args) -> int:
    print(_render_queue(Path("log")))
    return 0


def _cmd_watch(args) -> int:
    iterations = args.iterations
    try:
        while iterations is None or iterations > 0:
            print(_render_queue(Path("log")))
            if iterations is not None:
                iterations -= 1
                if iterations == 0:
                    break
            time.sleep(args.interval)
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_status(args) -> int:
    node_count = args.nodes or 9
    log_path = Path("log")
    if log_path.is_file():
        states = pool.replay_node_states(log_path, node_count)
    else:
        states = [
            pool.NodeState(i, pool.NodeActivity.UNCLAIMED, 0.0, float("-inf"), 0)
            for i in range(node_count)
        ]
    for node in states:
        print(f"node {node.node_id}: {node.state.value}")
    return 0


def _append_log_events(path: Path, lines: list[str]) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line + "\n")


def _cmd_release(args) -> int:
    log_path = Path("log")
    if not log_path.is_file():
        print("no log in current directory", file=sys.stderr)
        return 1
    snapshot = pool.replay_queue_snapshot(log_path)
    if not any(j.cluster == args.cluster for j in snapshot.jobs):
        print(f"unknown cluster {args.cluster}", file=sys.stderr)
        return 1
    held = [j for j in snapshot.jobs if j.cluster == args.cluster and j.state is pool.JobState.HELD]
    last_time = max((j.submitted for j in snapshot.jobs), default=0.0)
    _append_log_events(
        log_path,
        [f"{pool.format_sim_time(last_time)} ({j.cluster}.{j.proc}) RELEASED" for j in held],
    )
    print(f"{len(held)} job(s) released from cluster {args.cluster}")
    return 0


def _cmd_rm(args) -> int:
    log_path = Path("log")
    if not log_path.is_file():
        print("no log in current directory", file=sys.stderr)
        return 1
    snapshot = pool.replay_queue_snapshot(log_path)
    targets = [
        j for j in snapshot.jobs
        if j.cluster == args.cluster
        and (args.proc is None or j.proc == args.proc)
        and j.state not in (pool.JobState.COMPLETED, pool.JobState.REMOVED)
    ]
    if not any(j.cluster == args.cluster for j in snapshot.jobs):
        print(f"unknown cluster {args.cluster}", file=sys.stderr)
        return 1
    last_time = max((j.submitted for j in snapshot.jobs), default=0.0)
    _append_log_events(
        log_path,
        [f"{pool.format_sim_time(last_time)} ({j.cluster}.{j.proc}) REMOVED" for j in targets],
    )
    print(f"{len(targets)} job(s) removed from cluster {args.cluster}")
    return 0


def _cmd_report(args) -> int:
    for path in report.write_report(args.dest_dir):
        print(f"report: {path}")
    return 0


def _cmd_selftest(args) -> int:
    """RANDU fails the 3-D lattice tests; minstd passes monobit; zero fails all."""
    small = battery.battery_spec("smallcrush")
    big = battery.battery_spec("bigcrush")
    randu_bds = next(t.index for t in big.tests if t.name == battery.BIGCRUSH_RANDU_BDS)
    randu_serial = next(t.index for t in big.tests if t.name == battery.BIGCRUSH_RANDU_SERIAL)
    checks = [
        ("minstd", small, 1, lambda o: o.verdict is not battery.Verdict.FAIL),
        ("xorshift64star", small, 1, lambda o: o.verdict is battery.Verdict.PASS),
        ("zero", small, 1, lambda o: o.verdict is battery.Verdict.FAIL),
        ("randu", big, randu_bds, lambda o: o.p_value < 1e-6),
        ("randu", big, randu_serial, lambda o: o.p_value < 1e-6),
        ("xorshift64star", big, randu_bds, lambda o: o.verdict is not battery.Verdict.FAIL),
    ]
    print(f"{'generator':16s} {'test':42s} {'p-value':>12s} {'verdict':8s} ok")
    all_ok = True
    for name, spec, index, expectation in checks:
        gen = parse_generator(name, seed=args.seed)
        outcome = battery.run_single_test(spec, index, gen)
        ok = expectation(outcome)
        all_ok &= ok
        print(f"{name:16s} {outcome.name:42s} {outcome.p_value:12.6g} "
              f"{outcome.verdict.value:8s} {'yes' if ok else 'NO'}")
    print("selftest: " + ("OK" if all_ok else "FAILED"))
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crushpool",
        description="Run a mini crush battery against an RNG on an HTCondor-like pool.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline: makesub, submit, poll, stitch")
    run.add_argument("generator", help="minstd|randu|xorshift64star|zero|file:<path>")
    run.add_argument("battery", help="smallcrush|crush|bigcrush")
    run.add_argument("dest_dir")
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--slots", type=int, help="total slot override (single synthetic node)")
    run.add_argument("--nodes", type=int)
    run.add_argument("--slots-per-node", type=int, dest="slots_per_node")
    run.add_argument("--simulated", action="store_true", help="virtual-clock pool (default: real)")
    run.add_argument("--duration", type=float, help="simulated per-job duration seconds")
    run.add_argument("--poll", type=float, default=12.0)
    run.add_argument("--idle-minutes", type=float, dest="idle_minutes")
    run.add_argument("--fault", action="append",
                     help="hold:<proc>:transient|output, restart:<node>:<t>, busy:<node>:<s>:<e>")
    run.add_argument("--config", help="key = value file with pool defaults")
    run.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                     help="render summary.csv and figures into dest")
    run.set_defaults(fn=_cmd_run)

    makesub = sub.add_parser("makesub", help="print the submission file")
    makesub.add_argument("executable")
    makesub.add_argument("battery")
    makesub.set_defaults(fn=_cmd_makesub)

    check = sub.add_parser("check", help="are all output files generated? (exit 0/1)")
    check.add_argument("battery")
    check.set_defaults(fn=_cmd_check)

    st = sub.add_parser("stitch", help="join output files into results.txt/stats.txt")
    st.add_argument("battery")
    st.add_argument("dest_dir")
    st.set_defaults(fn=_cmd_stitch)

    q = sub.add_parser("q", help="render the queue summary once (from ./log)")
    q.set_defaults(fn=_cmd_q)

    watch = sub.add_parser("watch", help="render the queue summary every 2 seconds")
    watch.add_argument("--interval", type=float, default=2.0)
    watch.add_argument("--iterations", type=int, default=None, help=argparse.SUPPRESS)
    watch.set_defaults(fn=_cmd_watch)

    status = sub.add_parser("status", help="per-node pool state (from ./log)")
    status.add_argument("--nodes", type=int, default=None)
    status.set_defaults(fn=_cmd_status)

    release = sub.add_parser("release", help="release held jobs of a cluster (log record)")
    release.add_argument("cluster", type=int)
    release.set_defaults(fn=_cmd_release)

    rm = sub.add_parser("rm", help="remove jobs of a cluster (log record)")
    rm.add_argument("cluster", type=int)
    rm.add_argument("proc", type=int, nargs="?", default=None)
    rm.set_defaults(fn=_cmd_rm)

    rep = sub.add_parser("report", help="summary.csv and figures for a stitched run dir")
    rep.add_argument("dest_dir")
    rep.set_defaults(fn=_cmd_report)

    selftest = sub.add_parser("selftest", help="known-good/known-bad generator demonstration")
    selftest.add_argument("--seed", type=int, default=12345)
    selftest.set_defaults(fn=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (battery.UsageError, ConfigurationError, _UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (monitor.MonitorError, stitch.StitchError, pool.PoolError,
            orchestrator.OrchestratorError, submitfile.SubmitParseError,
            report.ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
