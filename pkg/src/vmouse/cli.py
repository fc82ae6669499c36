"""Command-line entry points for every pipeline.

Every run writes a ``manifest.json`` next to its outputs recording the
tool version, subcommand, arguments, and seed, so results can be
reproduced exactly.  Exit codes: 0 success, 2 validation/usage error,
1 runtime error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from . import analysis, device_io, trajectory
from .arm import ArmModel, SyntheticUser
from .fusion import VirtualConfig
from .optimizer import (
    CalibrationPlan,
    OptimizerError,
    optimize_in_task,
    run_calibration,
)

_SEED_ENV = "VMOUSE_SEED"


def _default_seed(args_seed: int | None) -> int:
    if args_seed is not None:
        return args_seed
    return int(os.environ.get(_SEED_ENV, "0"))


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    seed: int, outputs: list[str]) -> None:
    manifest = {
        "tool": "vmouse",
        "version": __version__,
        "command": command,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "seed": seed,
        "outputs": outputs,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _synthetic_user(spec: str | None, seed: int, cpi: float = 800.0) -> SyntheticUser:
    kv = _parse_kv(spec) if spec else {}
    model = ArmModel(p_ref=float(kv.get("p_ref", 0.5)))
    return SyntheticUser(model, seed=seed, user_cpi=cpi)


# ---------------------------------------------------------------------------
# subcommands

def cmd_robot_sim(args) -> int:
    seed = _default_seed(args.seed)
    plan = trajectory.lemniscate_plan(
        length=args.length, rotate=args.rotate,
        sample_rate=args.sample_rate, duration=args.duration)
    positions = [float(p) / 100.0 for p in args.positions.split(",")]
    report = trajectory.run_experiment(plan, positions)
    print(trajectory.report_table(report))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "equivalence.csv"
    with csv_path.open("w", encoding="utf-8") as f:
        trajectory.report_csv(report, f)
    _write_manifest(out, "robot-sim", args, seed, [csv_path.name])
    return 0


def cmd_user_sim(args) -> int:
    seed = _default_seed(args.seed)
    user = _synthetic_user(args.synthetic, seed, args.cpi)
    cfg = VirtualConfig(p_percent=args.p, user_cpi=args.cpi)
    script = ["START", f"PLAY {args.duration}"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "session.log"
    with log_path.open("w", encoding="ascii") as f:
        for line in device_io.emulator_run(user.model, cfg, script, seed=seed):
            f.write(line + "\n")
    print(f"wrote {log_path}")
    _write_manifest(out, "user-sim", args, seed, [log_path.name])
    return 0


def cmd_analyze(args) -> int:
    seed = _default_seed(args.seed)
    kv = _parse_kv(args.task)
    task = analysis.TaskConfig(d_px=float(kv["D"]), w_px=float(kv["W"]))
    result = device_io.ingest_log(args.log)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    trials = _trials_from_log(result, task)
    if not trials:
        raise ValueError("log contains no complete sessions for this task")
    summaries = []
    for session_trials in trials:
        kept, _ = analysis.screen_outliers(session_trials, task)
        summaries.append(analysis.summarize_session(kept, task))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sessions.csv"
    with csv_path.open("w", encoding="utf-8") as f:
        analysis.sessions_csv(summaries, f)
    for s in summaries:
        print(f"D={s.d_px:.0f} W={s.w_px:.0f} ID_e={s.id_e:.3f} "
              f"MT={s.mt_mean:.3f}s TP={s.tp:.3f} bits/s MAE={s.mae:.2f}px")
    _write_manifest(out, "analyze", args, seed, [csv_path.name])
    return 0


def _trials_from_log(result: device_io.IngestResult, task: analysis.TaskConfig):
    """Rebuild sessions of trials from click events in a device log."""
    sessions = device_io.split_sessions(result, task.n_targets)
    if not sessions:
        return []
    track = result.cursor_path()
    centers = analysis.task_geometry(task)
    order = analysis.target_order(task)
    out = []
    for spans in sessions:
        # the session-start click landed on the first target of the pattern;
        # relative device logs are aligned there
        start_click = spans[0][0] - 1
        shift = centers[order[0]] - track[start_click + 1, 1:3]
        trials = []
        for j, (start, end) in enumerate(spans):
            path = track[start:end + 2].copy()
            path[:, 1:3] += shift
            trials.append(analysis.Trial(
                prev_target=tuple(centers[order[j]]),
                target=tuple(centers[order[j + 1]]),
                click=(float(path[-1, 1]), float(path[-1, 2])),
                path=path,
                mt=float(path[-1, 0] - path[0, 0]),
            ))
        out.append(trials)
    return out


def cmd_calibrate(args) -> int:
    seed = _default_seed(args.seed)
    user = _synthetic_user(args.synthetic, seed)
    plan = CalibrationPlan(seconds_per_position=args.seconds)
    result = run_calibration(plan, user, seed=seed)
    print(f"visit order: {result.order}")
    for b in result.blocks:
        print(f"p={b.p_percent:3d}%  TP={b.tp_mean:.3f} +/- {b.tp_ci95:.3f}  "
              f"MAE={b.mae_mean:.2f}px  ({len(b.sessions)} sessions)")
    print(f"best subset: {result.subset}")
    print(f"chosen p: {result.chosen_p}%")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "blocks.csv"
    with csv_path.open("w", encoding="utf-8") as f:
        analysis.blocks_csv(result.blocks, f)
    outputs = [csv_path.name]
    outputs += _block_plots(result.blocks, out)
    _write_manifest(out, "calibrate", args, seed, outputs)
    return 0


def _block_plots(blocks, out: Path) -> list[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = []
    ps = [b.p_percent for b in blocks]
    for metric, label, fname in (
        ("tp_mean", "throughput (bits/s)", "tp_vs_p.svg"),
        ("mae_mean", "MAE (px)", "mae_vs_p.svg"),
    ):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        vals = [getattr(b, metric) for b in blocks]
        if metric == "tp_mean":
            ax.errorbar(ps, vals, yerr=[b.tp_ci95 for b in blocks],
                        fmt="o-", capsize=3)
        else:
            ax.plot(ps, vals, "o-")
        ax.set_xlabel("sensor position (%)")
        ax.set_ylabel(label)
        fig.tight_layout()
        fig.savefig(out / fname)
        plt.close(fig)
        names.append(fname)
    return names


def cmd_optimize(args) -> int:
    seed = _default_seed(args.seed)
    user = _synthetic_user(args.synthetic, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = None
    if args.checkpoint:
        ckpt = Path(args.checkpoint)
        ckpt.parent.mkdir(parents=True, exist_ok=True)
    result = optimize_in_task(
        user, budget=args.budget, seconds_per_sample=args.seconds, checkpoint=ckpt)
    for i, (p, pdr) in enumerate(result.history):
        print(f"iter {i:2d}: p={p:3d}%  PDR={pdr:.5f}")
    print(f"final p: {result.final_p}%")
    hist_path = out / "optimize_history.csv"
    with hist_path.open("w", encoding="utf-8") as f:
        f.write("iteration,p_percent,pdr\n")
        for i, (p, pdr) in enumerate(result.history):
            f.write(f"{i},{p},{pdr:.9g}\n")
    outputs = [hist_path.name] + ([ckpt.name] if ckpt else [])
    _write_manifest(out, "optimize", args, seed, outputs)
    return 0


def cmd_emulate(args) -> int:
    seed = _default_seed(args.seed)
    user = _synthetic_user(args.synthetic, seed, args.cpi)
    cfg = VirtualConfig(p_percent=args.p, user_cpi=args.cpi)
    script = [s.strip() for s in args.script.split(";") if s.strip()]
    lines = device_io.emulator_run(user.model, cfg, script, seed=seed)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="ascii") as f:
            for line in lines:
                f.write(line + "\n")
        print(f"wrote {path}")
        _write_manifest(path.parent, "emulate", args, seed, [path.name])
    else:
        for line in lines:
            print(line)
    return 0


def cmd_verify_log(args) -> int:
    result = device_io.ingest_log(args.log)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"records: {len(result.records)}")
    print(f"clicks: {len(result.clicks)}")
    print(f"mx/my mismatches: {result.mismatches}")
    return 0 if result.mismatches == 0 else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(state_dir=args.state_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vmouse",
        description="virtual mouse sensor-position laboratory",
    )
    ap.add_argument("--version", action="version", version=f"vmouse {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("robot-sim", help="simulated robot equivalence experiment")
    p.add_argument("--rotate", action="store_true")
    p.add_argument("--length", type=float, default=700.0, help="planned path mm")
    p.add_argument("--positions", default="20,30,40,50,60,70,80",
                   help="comma-separated percents")
    p.add_argument("--sample-rate", type=float, default=500.0)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out/robot-sim")
    p.set_defaults(func=cmd_robot_sim)

    p = sub.add_parser("user-sim", help="synthetic user alone, exported as a device log")
    p.add_argument("--synthetic", default=None, help="e.g. p_ref=0.4")
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--cpi", type=float, default=800.0)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out/user-sim")
    p.set_defaults(func=cmd_user_sim)

    p = sub.add_parser("analyze", help="analyze a device log against a task")
    p.add_argument("--log", required=True)
    p.add_argument("--task", required=True, help="D=300,W=20")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out/analyze")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="one-shot calibration over 20..80%")
    p.add_argument("--synthetic", default=None, help="e.g. p_ref=0.4")
    p.add_argument("--seconds", type=float, default=240.0, help="per-position task time")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out/calibrate")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("optimize", help="in-task GP+EI optimization")
    p.add_argument("--synthetic", default=None, help="e.g. p_ref=0.4")
    p.add_argument("--budget", type=int, default=15)
    p.add_argument("--seconds", type=float, default=60.0, help="task time per sample")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out/optimize")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("emulate", help="device emulator: commands + activity schedule")
    p.add_argument("--script", required=True, help='e.g. "SET_P 50; START; PLAY 5"')
    p.add_argument("--synthetic", default=None)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--cpi", type=float, default=800.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_emulate)

    p = sub.add_parser("verify-log", help="re-verify fused columns of a log")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_verify_log)

    p = sub.add_parser("serve", help="run the local calibration service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8173)
    p.add_argument("--state-dir", default="out/service-state")
    p.set_defaults(func=cmd_serve)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OptimizerError, device_io.ProtocolError,
            analysis.AnalysisError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
