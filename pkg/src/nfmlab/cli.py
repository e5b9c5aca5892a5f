"""Command-line entry point.

Subcommands: train-teacher, distill, sample, eval, ztable.  Every command
takes --config/--seed/--out, honors the seed end to end, and exits 0 on
success, 1 on usage/configuration errors, 2 on numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .autodiff import NumericError
from .checkpoint import (
    CheckpointError,
    load_student,
    load_teacher,
    save_student,
    save_teacher,
)
from .config import ConfigError, RunConfig, load_config
from .couplings import Independent, MinibatchOT, NFTeacher, SemiDiscreteOT, fit_sd_potentials
from .datasets import sample_dataset, save_batch_csv
from .metrics import curvature, guidance_search, teacher_nll, wasserstein2, z_table
from .rand import stream
from .sampling import Schedule, SolverConfig, nfe_count, sample_set, save_trajectories_csv
from .student import VelocityNet, train_student
from .svg import density_grid, line_chart, scatter_plot
from .teacher import FlowTeacher, estimate_sigma_f, nll_per_dim, train_teacher
from . import svg as svgmod

__all__ = ["main"]


class UsageError(ValueError):
    pass


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _outdir(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def _text_table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[_cell(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{v:.4f}"
    return str(v)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train_teacher(args) -> int:
    cfg = _load_cfg(args)
    if args.eta is not None:
        cfg.teacher_eta = args.eta  # flag supersedes file value
    spec = cfg.dataset_spec()
    out = _outdir(cfg)
    teacher = FlowTeacher(
        n=spec.n,
        k=spec.k,
        blocks=cfg.teacher_blocks,
        width=cfg.teacher_width,
        embed_dim=cfg.teacher_embed_dim,
        eta=cfg.teacher_eta,
        clamp=cfg.teacher_clamp,
        rng=stream(cfg.seed, 0),
    )
    history = train_teacher(
        teacher,
        spec,
        steps=cfg.teacher_steps,
        batch_size=cfg.teacher_batch,
        rng=stream(cfg.seed, 1),
        lr=cfg.teacher_lr,
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        eps_opt=cfg.adam_eps,
        dropout_p=cfg.label_dropout,
    )
    estimate_sigma_f(teacher, spec, cfg.teacher_sigma_samples, stream(cfg.seed, 2))
    ckpt = os.path.join(out, "teacher.ckpt")
    save_teacher(ckpt, teacher)
    _write_csv(
        os.path.join(out, "teacher_loss.csv"),
        ["step", "loss", "nll_per_dim"],
        [(i, v, nll_per_dim(v, spec.n)) for i, v in enumerate(history)],
    )
    if history:
        line_chart(
            os.path.join(out, "teacher_loss.svg"),
            {"nll_per_dim": np.array([nll_per_dim(v, spec.n) for v in history])},
            title=f"teacher training (eta={teacher.eta})",
            ylabel="nll/dim",
        )
    held_out = teacher_nll(teacher, spec, 4096, stream(cfg.seed, 3))
    print(f"teacher checkpoint: {ckpt}")
    print(f"teacher NLL/dim (held out): {held_out:.4f} nats")
    if spec.n == 2:
        from .teacher import nf_inverse

        rng = stream(cfg.seed, 4)
        z = rng.standard_normal((512, spec.n))
        labels = rng.integers(0, spec.k, size=512)
        gen = nf_inverse(teacher, z, labels)
        scatter_plot(
            os.path.join(out, "teacher_samples.svg"),
            gen,
            labels,
            title="teacher samples via inverse flow",
            background=density_grid(spec),
        )
    return 0


def _build_mode(name, cfg, spec, teacher_path, seed):
    if name == "fm":
        return Independent(), None
    if name == "ot":
        return MinibatchOT(label_cost=cfg.student_label_cost), None
    if name == "sdot":
        support = sample_dataset(spec, cfg.sd_subset, stream(seed, 10))
        mode = SemiDiscreteOT(
            support=support, label_cost=cfg.sd_label_cost, step_size=cfg.sd_step_size
        )
        fit_sd_potentials(mode, stream(seed, 11), iterations=cfg.sd_iterations, batch_size=cfg.sd_batch)
        return mode, mode
    if name == "nfm":
        if not teacher_path:
            raise UsageError("--coupling nfm requires --teacher CKPT")
        teacher = load_teacher(teacher_path)
        if teacher.sigma_f is None:
            raise UsageError(f"teacher checkpoint {teacher_path} has no sigma_f section")
        return NFTeacher(teacher=teacher), None
    raise UsageError(f"unknown coupling {name!r}")


def cmd_distill(args) -> int:
    cfg = _load_cfg(args)
    if args.coupling is not None:
        cfg.student_coupling = args.coupling
    if args.steps is not None:
        cfg.student_steps = args.steps
    spec = cfg.dataset_spec()
    out = _outdir(cfg)
    mode, sd_mode = _build_mode(cfg.student_coupling, cfg, spec, args.teacher, cfg.seed)
    net = VelocityNet(
        n=spec.n,
        k=spec.k,
        hidden=cfg.student_widths,
        time_dim=cfg.student_time_dim,
        embed_dim=cfg.student_embed_dim,
        rng=stream(cfg.seed, 20),
    )
    history = train_student(
        net,
        mode,
        spec,
        steps=cfg.student_steps,
        batch_size=cfg.student_batch,
        rng=stream(cfg.seed, 21),
        lr=cfg.student_lr,
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        eps_opt=cfg.adam_eps,
        dropout_p=cfg.label_dropout,
    )
    ckpt = os.path.join(out, f"student_{cfg.student_coupling}.ckpt")
    save_student(ckpt, net, cfg.student_coupling, cfg.student_label_cost, sd_mode=sd_mode)
    _write_csv(
        os.path.join(out, f"student_{cfg.student_coupling}_loss.csv"),
        ["step", "loss", "mode"],
        [(i, v, cfg.student_coupling) for i, v in enumerate(history)],
    )
    if history:
        line_chart(
            os.path.join(out, f"student_{cfg.student_coupling}_loss.svg"),
            {cfg.student_coupling: np.array(history)},
            title=f"flow-matching loss ({cfg.student_coupling})",
            log_y=True,
            ylabel="loss",
        )
    print(f"student checkpoint: {ckpt}")
    if history:
        tail = float(np.mean(history[-min(100, len(history)) :]))
        print(f"final smoothed loss: {tail:.6f}")
    return 0


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    net, coupling = load_student(args.checkpoint)
    solver = args.solver or cfg.sampler_solver
    steps = args.steps or cfg.sampler_steps
    schedule = Schedule(kind=args.schedule or cfg.sampler_schedule, steps=steps)
    config = SolverConfig(
        solver=solver,
        schedule=schedule,
        guidance=args.guidance if args.guidance is not None else cfg.sampler_guidance,
        class_label=args.class_label,
    )
    out = _outdir(cfg)
    samples, trajectories = sample_set(net, config, args.count, cfg.seed, return_trajectories=True)
    assert trajectories[0].nfe == nfe_count(config)
    print(f"NFE={trajectories[0].nfe}")
    labels = np.array([t.label for t in trajectories])
    rows = [[repr(float(v)) for v in row] + [int(lab)] for row, lab in zip(samples, labels)]
    path = os.path.join(out, "samples.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(net.n)] + ["label"])
        writer.writerows(rows)
    print(f"samples: {path}")
    spec = cfg.dataset_spec()
    if net.n == 2:
        scatter_plot(
            os.path.join(out, "samples.svg"),
            samples,
            labels,
            title=f"{coupling} student, {solver}({schedule.kind}) NFE={trajectories[0].nfe}",
            background=density_grid(spec) if spec.n == net.n else None,
        )
    if args.trajectories:
        save_trajectories_csv(trajectories, os.path.join(out, "trajectories.csv"))
        if net.n == 2:
            canvas = svgmod.SvgCanvas((-3.5, 3.5), (-3.5, 3.5), title="sampling trajectories")
            for traj in trajectories[: min(len(trajectories), 64)]:
                canvas.polyline(traj.states[:, :2], color=svgmod.class_color(traj.label), width=0.8, opacity=0.6)
            canvas.save(os.path.join(out, "trajectories.svg"))
    return 0


def _steps_for_nfe(nfe: int, solver: str) -> int:
    if solver == "euler":
        return nfe
    if nfe % 2 == 0:
        raise UsageError(f"heun cannot hit an even NFE ({nfe}); NFE = 2*steps - 1")
    return (nfe + 1) // 2


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    net, coupling = load_student(args.checkpoint)
    spec = cfg.dataset_spec()
    out = _outdir(cfg)
    if not args.nfe.strip():
        raise UsageError("--nfe list is empty")
    nfe_values = [int(s) for s in args.nfe.split(",") if s.strip()]
    if not nfe_values:
        raise UsageError("--nfe list is empty")
    reference = sample_dataset(spec, args.count, stream(cfg.seed, 90)).x
    rows = []
    for nfe in nfe_values:
        solver = args.solver or ("euler" if nfe <= 5 else "heun")
        schedule = Schedule(kind="linear" if solver == "euler" else "square", steps=_steps_for_nfe(nfe, solver))
        base = SolverConfig(solver=solver, schedule=schedule, guidance=0.0)
        w = 0.0
        if args.search_guidance:
            w = guidance_search(
                net, base, reference[: args.quick_count], args.quick_count, stream(cfg.seed, 91, nfe)
            )
        guided = SolverConfig(solver=solver, schedule=schedule, guidance=w)
        samples = sample_set(net, guided, args.count, cfg.seed + nfe)
        w2 = wasserstein2(samples, reference)
        _, trajs = sample_set(net, base, args.kappa_count, cfg.seed + nfe, return_trajectories=True)
        kappa = curvature(trajs)  # always unguided
        rows.append([nfe, solver, w, w2, kappa])
        print(f"NFE={nfe} solver={solver} w={w} W2={w2:.4f} kappa={kappa:.4f}")
    header = ["nfe", "solver", "guidance", "w2", "curvature"]
    _write_csv(os.path.join(out, "eval.csv"), header, rows)
    table = _text_table(header, rows)
    with open(os.path.join(out, "eval.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# {coupling} student\n" + table + "\n")
    print(table)
    return 0


def cmd_ztable(args) -> int:
    cfg = _load_cfg(args)
    spec = cfg.dataset_spec()
    out = _outdir(cfg)
    teachers = {}
    for path in args.teacher:
        if not os.path.exists(path):
            raise UsageError(f"teacher checkpoint not found: {path}")
        t = load_teacher(path)
        teachers[t.eta] = t
    etas = sorted(teachers)
    rows_data = z_table(teachers, spec, etas, args.pairs, stream(cfg.seed, 95))
    header = ["eta", "dx_xnen", "dz_xnen", "dx_xsen", "dz_xsen", "dx_xnes", "dz_xnes"]
    rows = [
        [r.eta, r.d_x[0], r.d_z[0], r.d_x[1], r.d_z[1], r.d_x[2], r.d_z[2]] for r in rows_data
    ]
    _write_csv(os.path.join(out, "ztable.csv"), header, rows)
    table = _text_table(header, rows)
    with open(os.path.join(out, "ztable.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return 0


def cmd_export_data(args) -> int:
    cfg = _load_cfg(args)
    spec = cfg.dataset_spec()
    out = _outdir(cfg)
    batch = sample_dataset(spec, args.count, stream(cfg.seed, 99))
    path = os.path.join(out, "dataset.csv")
    save_batch_csv(batch, path)
    print(f"dataset: {path}")
    return 0


# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run configuration file (key = value lines)")
    p.add_argument("--seed", type=int, help="root RNG seed (overrides config)")
    p.add_argument("--out", help="output directory (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train the normalizing-flow teacher")
    _add_common(p)
    p.add_argument("--eta", type=float, help="input noise level override")
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="train a flow-matching student under a coupling")
    _add_common(p)
    p.add_argument("--coupling", choices=["fm", "ot", "sdot", "nfm"])
    p.add_argument("--teacher", help="teacher checkpoint (required for nfm)")
    p.add_argument("--steps", type=int, help="training steps override")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("sample", help="draw samples from a student checkpoint")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("--solver", choices=["euler", "heun"])
    p.add_argument("--steps", type=int)
    p.add_argument("--schedule", choices=["linear", "square"])
    p.add_argument("--guidance", type=float)
    p.add_argument("--count", type=int, default=256)
    p.add_argument("--class", dest="class_label", type=int, default=None)
    p.add_argument("--trajectories", action="store_true", help="also dump full trajectories")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="quality/curvature table over an NFE list")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("--nfe", required=True, help="comma-separated NFE values, e.g. 31,15,7")
    p.add_argument("--solver", choices=["euler", "heun"], help="force one solver for all rows")
    p.add_argument("--search-guidance", action="store_true")
    p.add_argument("--count", type=int, default=1024, help="samples for W2")
    p.add_argument("--quick-count", type=int, default=256, help="samples per guidance probe")
    p.add_argument("--kappa-count", type=int, default=512, help="trajectories for curvature")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ztable", help="z-space distance table from teacher checkpoints")
    _add_common(p)
    p.add_argument("--teacher", action="append", required=True, help="repeat once per eta")
    p.add_argument("--pairs", type=int, default=4096, help="Monte-Carlo pairs per cell")
    p.set_defaults(func=cmd_ztable)

    p = sub.add_parser("export-data", help="sample a dataset to CSV")
    _add_common(p)
    p.add_argument("--count", type=int, default=4096)
    p.set_defaults(func=cmd_export_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
