"""Flat `key = value` run configuration with dotted section keys.

The format is line-oriented and diffable: `#` starts a comment, every key
has a documented default, and unknown keys are rejected with the offending
line number.  A seed is always present so no run is silently nondeterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "DEFAULTS_TEXT"]


class ConfigError(ValueError):
    """Malformed configuration input; message names the offending key/line."""


@dataclass
class RunConfig:
    # dataset
    dataset_name: str = "gauss_mix"  # gauss_mix | moons | checkerboard | aniso_gauss
    dataset_n: int = 2
    dataset_k: int = 8
    dataset_scale: float = 0.25
    dataset_radius: float = 4.0
    dataset_component_std: float = 0.3
    dataset_moon_noise: float = 0.08
    dataset_board_extent: float = 2.0
    # teacher
    teacher_blocks: int = 8
    teacher_width: int = 64
    teacher_embed_dim: int = 16
    teacher_eta: float = 0.05
    teacher_clamp: float = 4.0
    teacher_steps: int = 8000
    teacher_batch: int = 256
    teacher_lr: float = 1e-3
    teacher_sigma_samples: int = 8192
    # student
    student_widths: tuple = (256, 256, 256)
    student_time_dim: int = 32
    student_embed_dim: int = 16
    student_steps: int = 16000
    student_batch: int = 256
    student_lr: float = 1e-3
    student_coupling: str = "fm"  # fm | ot | sdot | nfm
    student_label_cost: float = 1000.0  # class-consistent OT, same convention as sd.label_cost
    # semi-discrete OT
    sd_subset: int = 2048
    sd_label_cost: float = 1000.0
    sd_step_size: float = 0.1
    sd_iterations: int = 2000
    sd_batch: int = 256
    # shared training policy
    label_dropout: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # sampler defaults
    sampler_solver: str = "heun"
    sampler_steps: int = 16
    sampler_schedule: str = "square"  # linear | square
    sampler_guidance: float = 0.0
    # run
    seed: int = 0
    out_dir: str = "runs/out"

    def dataset_spec(self):
        from .datasets import DatasetSpec

        return DatasetSpec(
            name=self.dataset_name,
            n=self.dataset_n,
            k=self.dataset_k,
            scale=self.dataset_scale,
            radius=self.dataset_radius,
            component_std=self.dataset_component_std,
            moon_noise=self.dataset_moon_noise,
            board_extent=self.dataset_board_extent,
        )


# dotted config key -> dataclass field
_KEYMAP = {
    "dataset.name": "dataset_name",
    "dataset.n": "dataset_n",
    "dataset.k": "dataset_k",
    "dataset.scale": "dataset_scale",
    "dataset.radius": "dataset_radius",
    "dataset.component_std": "dataset_component_std",
    "dataset.moon_noise": "dataset_moon_noise",
    "dataset.board_extent": "dataset_board_extent",
    "teacher.blocks": "teacher_blocks",
    "teacher.width": "teacher_width",
    "teacher.embed_dim": "teacher_embed_dim",
    "teacher.eta": "teacher_eta",
    "teacher.clamp": "teacher_clamp",
    "teacher.steps": "teacher_steps",
    "teacher.batch": "teacher_batch",
    "teacher.lr": "teacher_lr",
    "teacher.sigma_samples": "teacher_sigma_samples",
    "student.widths": "student_widths",
    "student.time_dim": "student_time_dim",
    "student.embed_dim": "student_embed_dim",
    "student.steps": "student_steps",
    "student.batch": "student_batch",
    "student.lr": "student_lr",
    "student.coupling": "student_coupling",
    "student.label_cost": "student_label_cost",
    "sd.subset": "sd_subset",
    "sd.label_cost": "sd_label_cost",
    "sd.step_size": "sd_step_size",
    "sd.iterations": "sd_iterations",
    "sd.batch": "sd_batch",
    "train.label_dropout": "label_dropout",
    "adam.beta1": "adam_beta1",
    "adam.beta2": "adam_beta2",
    "adam.eps": "adam_eps",
    "sampler.solver": "sampler_solver",
    "sampler.steps": "sampler_steps",
    "sampler.schedule": "sampler_schedule",
    "sampler.guidance": "sampler_guidance",
    "seed": "seed",
    "out": "out_dir",
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, attr: str, raw: str, lineno: int):
    kind = _FIELD_TYPES[attr]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return tuple(int(p.strip()) for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: key {key!r} expects {kind}, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse config text; unknown keys and malformed lines are diagnostics, not crashes."""
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _KEYMAP:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr = _KEYMAP[key]
        setattr(cfg, attr, _convert(key, attr, raw, lineno))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.student_coupling not in ("fm", "ot", "sdot", "nfm"):
        raise ConfigError(f"key 'student.coupling': unknown coupling {cfg.student_coupling!r}")
    if cfg.sampler_solver not in ("euler", "heun"):
        raise ConfigError(f"key 'sampler.solver': unknown solver {cfg.sampler_solver!r}")
    if cfg.sampler_schedule not in ("linear", "square"):
        raise ConfigError(f"key 'sampler.schedule': unknown schedule {cfg.sampler_schedule!r}")
    if cfg.teacher_eta < 0:
        raise ConfigError("key 'teacher.eta': must be nonnegative")
    if not 0 <= cfg.label_dropout < 1:
        raise ConfigError("key 'train.label_dropout': must lie in [0, 1)")
    if cfg.seed < 0:
        raise ConfigError("key 'seed': must be nonnegative")


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


DEFAULTS_TEXT = "\n".join(f"{key} = {_fmt(getattr(RunConfig(), attr))}" for key, attr in _KEYMAP.items())
