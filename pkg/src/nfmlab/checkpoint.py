"""Versioned binary checkpoint container.

Layout: a UTF-8 text header (magic line, one manifest line per tensor,
blank line), then the concatenated little-endian float64 payload, then a
4-byte little-endian CRC-32 of the payload.  Manifest lines carry
section, name, shape and byte offset into the payload, so sections can be
read selectively and files diffed by header.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = [
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "save_teacher",
    "load_teacher",
    "save_student",
    "load_student",
]

MAGIC = "NFMLAB-CKPT v1"


class CheckpointError(ValueError):
    """Corrupt or malformed checkpoint file."""


def save_checkpoint(path, sections: dict[str, dict[str, np.ndarray]]) -> None:
    """Write {section: {tensor name: array}} to `path`.

    Iteration order is canonical (sorted) so identical contents always
    produce byte-identical files.
    """
    manifest_lines = []
    chunks = []
    offset = 0
    for section in sorted(sections):
        tensors = sections[section]
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8")
            if arr.ndim:
                arr = np.ascontiguousarray(arr)  # keep 0-d scalars 0-d
            shape = ",".join(str(s) for s in arr.shape) if arr.ndim else "scalar"
            manifest_lines.append(f"{section} {name} {shape} {offset}")
            chunks.append(arr.tobytes())
            offset += len(chunks[-1])
    payload = b"".join(chunks)
    header = MAGIC + "\n" + "\n".join(manifest_lines) + "\n\n"
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(payload)
        fh.write(crc.to_bytes(4, "little"))


def load_checkpoint(path) -> dict[str, dict[str, np.ndarray]]:
    """Read a checkpoint written by save_checkpoint; verifies the CRC."""
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise CheckpointError(f"{path}: missing header terminator")
    header = blob[:sep].decode("utf-8", errors="replace").splitlines()
    if not header or header[0] != MAGIC:
        raise CheckpointError(f"{path}: bad magic line {header[:1]!r}")
    payload = blob[sep + 2 : -4]
    stored_crc = int.from_bytes(blob[-4:], "little")
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch, file is corrupt")
    sections: dict[str, dict[str, np.ndarray]] = {}
    prev_offset = -1
    for line in header[1:]:
        parts = line.split(" ")
        if len(parts) != 4:
            raise CheckpointError(f"{path}: malformed manifest line {line!r}")
        section, name, shape_s, offset_s = parts
        offset = int(offset_s)
        if offset <= prev_offset:
            raise CheckpointError(f"{path}: manifest offsets not ascending at {line!r}")
        prev_offset = offset
        shape = () if shape_s == "scalar" else tuple(int(s) for s in shape_s.split(","))
        count = int(np.prod(shape)) if shape else 1
        raw = payload[offset : offset + count * 8]
        if len(raw) != count * 8:
            raise CheckpointError(f"{path}: payload truncated for {section}/{name}")
        arr = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
        sections.setdefault(section, {})[name] = arr
    return sections


# ---------------------------------------------------------------------------
# model bridges

_COUPLING_CODES = {"fm": 0, "ot": 1, "sdot": 2, "nfm": 3}
_COUPLING_NAMES = {v: k for k, v in _COUPLING_CODES.items()}


def save_teacher(path, teacher) -> None:
    meta = {
        "kind": np.float64(1.0),
        "n": np.float64(teacher.n),
        "k": np.float64(teacher.k),
        "blocks": np.float64(teacher.blocks),
        "width": np.float64(teacher.width),
        "embed_dim": np.float64(teacher.embed_dim),
        "eta": np.float64(teacher.eta),
        "clamp": np.float64(teacher.clamp),
    }
    sections = {"meta": meta, "params": teacher.params}
    if teacher.sigma_f is not None:
        sections["sigma_f"] = {"sigma_f": teacher.sigma_f}
    save_checkpoint(path, sections)


def load_teacher(path):
    from .teacher import FlowTeacher

    sections = load_checkpoint(path)
    try:
        meta = sections["meta"]
        if int(meta["kind"]) != 1:
            raise CheckpointError(f"{path}: not a teacher checkpoint")
        teacher = FlowTeacher(
            n=int(meta["n"]),
            k=int(meta["k"]),
            blocks=int(meta["blocks"]),
            width=int(meta["width"]),
            embed_dim=int(meta["embed_dim"]),
            eta=float(meta["eta"]),
            clamp=float(meta["clamp"]),
        )
        params = sections["params"]
        if set(params) != set(teacher.params):
            raise CheckpointError(f"{path}: parameter names do not match the architecture")
        teacher.params = {k: np.array(v) for k, v in params.items()}
    except KeyError as e:
        raise CheckpointError(f"{path}: missing checkpoint entry {e}") from None
    if "sigma_f" in sections:
        teacher.sigma_f = np.array(sections["sigma_f"]["sigma_f"])
    return teacher


def save_student(path, net, coupling: str, label_cost: float = 0.0, sd_mode=None) -> None:
    meta = {
        "kind": np.float64(2.0),
        "n": np.float64(net.n),
        "k": np.float64(net.k),
        "time_dim": np.float64(net.time_dim),
        "embed_dim": np.float64(net.embed_dim),
        "widths": np.asarray(net.hidden, dtype=np.float64),
        "coupling": np.float64(_COUPLING_CODES[coupling]),
        "label_cost": np.float64(label_cost),
    }
    sections = {"meta": meta, "params": net.params}
    if sd_mode is not None:
        sections["sd_potentials"] = {
            "g": sd_mode.potentials,
            "support_x": sd_mode.support.x,
            "support_c": sd_mode.support.c.astype(np.float64),
        }
    save_checkpoint(path, sections)


def load_student(path):
    from .student import VelocityNet

    sections = load_checkpoint(path)
    try:
        meta = sections["meta"]
        if int(meta["kind"]) != 2:
            raise CheckpointError(f"{path}: not a student checkpoint")
        net = VelocityNet(
            n=int(meta["n"]),
            k=int(meta["k"]),
            hidden=tuple(int(w) for w in np.atleast_1d(meta["widths"])),
            time_dim=int(meta["time_dim"]),
            embed_dim=int(meta["embed_dim"]),
        )
        params = sections["params"]
        if set(params) != set(net.params):
            raise CheckpointError(f"{path}: parameter names do not match the architecture")
        net.params = {k: np.array(v) for k, v in params.items()}
        coupling = _COUPLING_NAMES[int(meta["coupling"])]
    except KeyError as e:
        raise CheckpointError(f"{path}: missing checkpoint entry {e}") from None
    return net, coupling
