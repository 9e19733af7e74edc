"""Command-line surface: config parsing, pipeline orchestration, JSON/CSV
emission.

Subcommands: chern | frame | wannier | dichotomy | galerkin | gap.
Exit codes: 0 success, 1 configuration error, 2 spectral-gap/topology error,
3 numerical-certificate failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import frames as frames_mod
from . import galerkin as galerkin_mod
from . import topology as topology_mod
from . import wannier as wannier_mod
from .errors import CertificateError, ConfigError, GapError, WandichError
from .kmesh import build_mesh
from .model import (
    BlochModel,
    ProjectorFamily,
    build_haldane,
    build_hofstadter,
    check_gap,
    load_matrix_model,
)

SCHEMA_VERSION = 1

DEFAULT_TOLERANCES = {
    "model.gap_tol": 1e-8,
    "transport.steps_per_unit": 256,
    "transport.tol_unitary": 1e-9,
    "transport.tol_intertwine": 1e-7,
    "frames.tol_periodic": 1e-7,
    "frames.smooth_radius": 0.125,
    "frames.kernel_width": 0.0625,
}


@dataclass
class RunConfig:
    model: str = "haldane"
    params: dict = field(default_factory=dict)
    mesh_N: int = 64
    supercell_L_list: tuple[int, ...] | None = None  # default: mesh_N/8,/4,/2
    s_grid: tuple[float, ...] = wannier_mod.DEFAULT_S_GRID
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output_dir: str = "out"
    seed: int = 0
    fmt: str = "json"

    def validate(self) -> None:
        if self.model not in ("haldane", "hofstadter", "matrixfile"):
            raise ConfigError(f"unknown model '{self.model}'")
        if self.mesh_N < 2 or self.mesh_N % 2 != 0:
            raise ConfigError(f"mesh_N must be even and >= 2, got {self.mesh_N}")
        if self.supercell_L_list is None:
            self.supercell_L_list = tuple(
                L for L in (self.mesh_N // 8, self.mesh_N // 4, self.mesh_N // 2)
                if L >= 2
            ) or (max(2, self.mesh_N // 2),)
        for L in self.supercell_L_list:
            if L > self.mesh_N // 2:
                raise ConfigError(
                    f"supercell L={L} exceeds mesh_N/2={self.mesh_N // 2}"
                )
        for key, val in self.tolerances.items():
            if isinstance(val, (int, float)) and val <= 0:
                raise ConfigError(f"tolerance {key} must be positive, got {val}")
        if self.fmt not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got '{self.fmt}'")


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(_parse_value(tok) for tok in text.split(",") if tok.strip())
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines with # comments; dotted keys hold the
    per-module tolerances."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            out[key.strip()] = _parse_value(val)
    return out


_CONFIG_FIELDS = {
    "model",
    "mesh_N",
    "supercell_L_list",
    "s_grid",
    "output_dir",
    "seed",
    "format",
}


def build_config(file_entries: dict, args) -> RunConfig:
    cfg = RunConfig()
    for key, val in file_entries.items():
        if key == "model":
            cfg.model = str(val)
        elif key == "mesh_N":
            cfg.mesh_N = int(val)
        elif key == "supercell_L_list":
            cfg.supercell_L_list = tuple(
                int(v) for v in (val if isinstance(val, tuple) else (val,))
            )
        elif key == "s_grid":
            cfg.s_grid = tuple(
                float(v) for v in (val if isinstance(val, tuple) else (val,))
            )
        elif key == "output_dir":
            cfg.output_dir = str(val)
        elif key == "seed":
            cfg.seed = int(val)
        elif key == "format":
            cfg.fmt = str(val)
        elif "." in key:
            cfg.tolerances[key] = val
        else:
            cfg.params[key] = val

    if args.model:
        cfg.model = args.model
    if args.mesh:
        cfg.mesh_N = args.mesh
    if args.out:
        cfg.output_dir = args.out
    if args.format:
        cfg.fmt = args.format
    for spec in args.param or ():
        if "=" not in spec:
            raise ConfigError(f"--param expects key=value, got '{spec}'")
        key, val = spec.split("=", 1)
        key = key.strip()
        parsed = _parse_value(val)
        if "." in key:
            cfg.tolerances[key] = parsed
        elif key in _CONFIG_FIELDS:
            raise ConfigError(f"use the dedicated flag or config key for '{key}'")
        else:
            cfg.params[key] = parsed
    cfg.validate()
    return cfg


def build_model(cfg: RunConfig) -> BlochModel:
    p = cfg.params
    if cfg.model == "haldane":
        return build_haldane(
            t1=float(p.get("t1", 1.0)),
            t2=float(p.get("t2", 0.1)),
            phi=float(p.get("phi", math.pi / 2)),
            M=float(p.get("M", 0.0)),
        )
    if cfg.model == "hofstadter":
        model = build_hofstadter(int(p.get("p", 1)), int(p.get("q", 3)))
        band = int(p.get("band", 0))
        if band != 0:
            model = BlochModel(
                dim=model.dim,
                lattice_basis=model.lattice_basis,
                hamiltonian=model.hamiltonian,
                occupied=(band,),
                params=model.params,
                name=model.name,
            )
        return model
    if cfg.model == "matrixfile":
        path = p.get("path")
        if not path:
            raise ConfigError("matrixfile model requires a 'path' parameter")
        occ = p.get("occupied", 0)
        occupied = tuple(int(v) for v in (occ if isinstance(occ, tuple) else (occ,)))
        return load_matrix_model(path, occupied=occupied)
    raise ConfigError(f"unknown model '{cfg.model}'")


def format_float(x: float) -> str:
    """Floats with 12 significant digits, deterministic across runs."""
    if isinstance(x, float) and not math.isfinite(x):
        return "null"
    if isinstance(x, float) and x == int(x) and abs(x) < 1e15:
        return f"{x:.1f}"
    return f"{x:.12g}"


def to_json(obj, indent: int = 0) -> str:
    """Minimal deterministic JSON writer (insertion-ordered dicts, fixed
    float formatting)."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{inner}"{k}": {to_json(v, indent + 1)}' for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{inner}{to_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    return '"' + str(obj).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _write(cfg: RunConfig, name: str, text: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _family(cfg: RunConfig, model: BlochModel) -> ProjectorFamily:
    return ProjectorFamily.from_model(
        model, gap_tol=float(cfg.tolerances.get("model.gap_tol", 1e-8))
    )


def _steps(cfg: RunConfig) -> int:
    return int(cfg.tolerances.get("transport.steps_per_unit", 256))


def cmd_gap(cfg: RunConfig) -> dict:
    model = build_model(cfg)
    rep = check_gap(model, cfg.mesh_N)
    return {
        "schema": SCHEMA_VERSION,
        "min_gap": rep.min_gap,
        "argmin_k": list(rep.argmin_k),
        "mesh_N": rep.mesh_size,
    }


def cmd_chern(cfg: RunConfig) -> dict:
    model = build_model(cfg)
    family = _family(cfg, model)
    mesh = build_mesh(cfg.mesh_N)
    res = topology_mod.chern_result(family, mesh)
    return {
        "schema": SCHEMA_VERSION,
        "chern_int": res.value_int,
        "chern_float": res.value_float,
        "discrepancy": res.discrepancy,
        "N": cfg.mesh_N,
    }


def _hs_table(frame, s_values) -> list[dict]:
    rows = []
    for s in s_values:
        rep = wannier_mod.hs_norm(frame, s)
        rows.append({"s": rep.s, "N": rep.mesh_N, "norm": rep.norm})
    return rows


def cmd_frame(cfg: RunConfig) -> dict:
    model = build_model(cfg)
    family = _family(cfg, model)
    built = frames_mod.build_frame(
        family,
        cfg.mesh_N,
        steps_per_unit=_steps(cfg),
        smooth_radius=float(cfg.tolerances.get("frames.smooth_radius", 0.125)),
        kernel_width=float(cfg.tolerances.get("frames.kernel_width", 0.0625)),
    )
    header = {"model": model.name}
    header.update({k: v for k, v in model.params.items()})
    frame_path = _write_frame(cfg, built.frame, header)
    gb = frames_mod.gradient_bound(built.frame)
    return {
        "schema": SCHEMA_VERSION,
        "N": cfg.mesh_N,
        "vertex_residual": built.skeleton.vertex_residual,
        "edge_residual": built.skeleton.edge_residual,
        "orthonormality": frames_mod.orthonormality_defect(built.frame),
        "subordination": frames_mod.subordination_defect(built.frame, family),
        "smoothed": built.smoothed,
        "gradient": {
            "sup_weighted": gb.sup_weighted,
            "sup_unweighted": gb.sup_unweighted,
            "profile": [[r, g] for r, g in gb.per_radius_profile],
        },
        "hs_table": _hs_table(built.frame, wannier_mod.DEFAULT_HS_GRID),
        "frame_file": frame_path,
    }


def _write_frame(cfg: RunConfig, frame, header) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "frame.csv")
    frames_mod.save_frame(frame, path, header=header)
    return path


def _wannier_csv(w) -> str:
    lines = ["band,R1,R2,orbital,re,im"]
    L = w.supercell_L
    for a in range(w.values.shape[0]):
        for i in range(w.values.shape[1]):
            for j in range(w.values.shape[2]):
                for orb in range(w.values.shape[3]):
                    z = w.values[a, i, j, orb]
                    if z == 0:
                        continue
                    lines.append(
                        f"{a},{i - L},{j - L},{orb},"
                        f"{format_float(z.real)},{format_float(z.imag)}"
                    )
    return "\n".join(lines) + "\n"


def cmd_wannier(cfg: RunConfig) -> dict:
    model = build_model(cfg)
    family = _family(cfg, model)
    L = max(cfg.supercell_L_list)
    built = frames_mod.build_frame(family, cfg.mesh_N, steps_per_unit=_steps(cfg))
    try:
        frame = frames_mod.kato_nagy_frame(family, built.frame.mesh)
        gauge = "kato-nagy"
    except WandichError:
        frame = built.frame
        gauge = "radial"
    w = wannier_mod.synthesize(frame, L)
    rep = wannier_mod.moments(
        w, s_grid=cfg.s_grid, lattice_basis=model.lattice_basis
    )
    csv_path = _write(cfg, "wannier.csv", _wannier_csv(w))
    return {
        "schema": SCHEMA_VERSION,
        "N": cfg.mesh_N,
        "L": L,
        "gauge": gauge,
        "masked_points": w.masked_points,
        "s_grid": list(rep.s_grid),
        "moments": [list(row) for row in rep.moments],
        "X2": list(rep.second_moment),
        "X_mean": [list(row) for row in rep.first_moment],
        "F_MV": rep.mv_spread,
        "wannier_file": csv_path,
    }


def _curvature_csv(field) -> str:
    lines = ["k1,k2,omega"]
    N = field.mesh.n_per_side
    for i in range(N):
        for j in range(N):
            k1, k2 = field.mesh.points[i, j]
            lines.append(
                f"{format_float(float(k1))},{format_float(float(k2))},"
                f"{format_float(float(field.omega[i, j]))}"
            )
    return "\n".join(lines) + "\n"


def cmd_dichotomy(cfg: RunConfig) -> dict:
    model = build_model(cfg)
    rep = wannier_mod.dichotomy_report(
        model,
        N=cfg.mesh_N,
        L_list=cfg.supercell_L_list,
        s_grid=cfg.s_grid,
        steps_per_unit=_steps(cfg),
        gap_tol=float(cfg.tolerances.get("model.gap_tol", 1e-8)),
    )
    family = _family(cfg, model)
    field = topology_mod.berry_curvature(family, build_mesh(cfg.mesh_N))
    _write(cfg, "curvature.csv", _curvature_csv(field))

    out = {
        "schema": SCHEMA_VERSION,
        "model": rep.model,
        "params": {k: rep.params[k] for k in sorted(rep.params)},
        "N": rep.mesh_N,
        "chern_int": rep.chern_int,
        "chern_float": rep.chern_float,
        "gauge": rep.gauge,
        "per_L": [
            {"L": r["L"], "N": r["N"], "X2": r["X2"], "F_MV": r["F_MV"]}
            for r in rep.per_L
        ],
        "hs_table": list(rep.hs_table),
        "exp_fit": [{"beta": b, "r2": q} for b, q in rep.exp_fit],
        "x2_logfit": {"slope": rep.x2_logfit[0], "r2": rep.x2_logfit[1]},
        "classification": rep.classification,
    }
    n_galerkin = cfg.tolerances.get("galerkin.n")
    if n_galerkin is not None:
        mesh = build_mesh(cfg.mesh_N)
        _, trep = galerkin_mod.truncate_family(family, int(n_galerkin), mesh)
        out["galerkin"] = {
            "n": trep.n,
            "min_injectivity": trep.min_injectivity,
            "chern_preserved": trep.chern_preserved,
            "projector_h1_distance": trep.projector_h1_distance,
        }
    return out


def cmd_galerkin(cfg: RunConfig) -> dict:
    model = build_model(cfg)
    family = _family(cfg, model)
    n = int(cfg.params.get("n", cfg.tolerances.get("galerkin.n", family.dim)))
    mesh = build_mesh(cfg.mesh_N)
    _, rep = galerkin_mod.truncate_family(family, n, mesh)
    return {
        "schema": SCHEMA_VERSION,
        "N": cfg.mesh_N,
        "n": rep.n,
        "min_injectivity": rep.min_injectivity,
        "chern_preserved": rep.chern_preserved,
        "projector_h1_distance": rep.projector_h1_distance,
        "certified": rep.certified,
    }


COMMANDS = {
    "chern": cmd_chern,
    "frame": cmd_frame,
    "wannier": cmd_wannier,
    "dichotomy": cmd_dichotomy,
    "galerkin": cmd_galerkin,
    "gap": cmd_gap,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wandich",
        description="Bloch frames, Chern numbers and Wannier localization diagnostics",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--model", default=None, choices=["haldane", "hofstadter", "matrixfile"])
    parser.add_argument(
        "--param",
        action="append",
        metavar="KEY=VALUE",
        help="model parameter or dotted tolerance override (repeatable)",
    )
    parser.add_argument("--mesh", type=int, default=None, metavar="N")
    parser.add_argument("--out", default=None, metavar="DIR")
    parser.add_argument("--format", default=None, choices=["json", "csv"])
    return parser


def run(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        entries = parse_config_file(args.config) if args.config else {}
        cfg = build_config(entries, args)
        result = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except GapError as exc:
        print(f"gap/topology error: {exc}", file=sys.stderr)
        return 2
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    text = to_json(result) + "\n"
    report_name = f"{args.command}.json"
    _write(cfg, report_name, text)
    sys.stdout.write(text)
    return 0
