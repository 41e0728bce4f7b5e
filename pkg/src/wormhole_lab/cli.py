"""Command-line harness: subcommands, configuration files and run manifests.

    python -m wormhole_lab.cli harmonic --n 1 --out-dir runs
    python -m wormhole_lab.cli spectral --n 1 --out-dir runs
    python -m wormhole_lab.cli evolve --config bump.cfg --out-dir runs
    python -m wormhole_lab.cli resolve --config runs/evolve_manifest.txt --out-dir runs
    python -m wormhole_lab.cli dispersive --dim 3 --j -1
    python -m wormhole_lab.cli accept --out-dir runs

Configuration files are ``key = value`` lines grouped in ``[section]``
blocks; ``#`` starts a comment.  Every command writes
``<command>[_<tag>]_manifest.txt`` that echoes the resolved configuration
and the sha256 of every output; the manifest is itself a valid
``--config`` for re-running the command.

Exit codes: 0 success, 1 acceptance failure, 2 usage, configuration or
input error.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .acceptance import RUNNERS, AcceptanceContext, run_acceptance
from .evolution import (
    EvolutionConfig,
    EvolutionResult,
    EnergyTrace,
    evolve,
    make_initial_data,
)
from .geometry import psi_to_u
from .harmonic import load_csv, ode_residual, save_csv, shoot_harmonic
from .numerics import RadialGrid, ToleranceSpec
from .resolution import ResolutionError, ResolutionReport, extract_radiation, local_energy
from .spectral import (
    LP_BUMP_DESCRIPTION,
    build_potential,
    fourier_forward,
    fourier_inverse,
    log_lambda_grid,
    plancherel_defect,
    dispersive_probe,
    resonance_report,
    spectral_measure,
    spectral_weights,
    wronskian,
    write_spectral_table,
)
from .acceptance import plancherel_bumps
from .tables import write_table

MANIFEST_HEADER = "# wormhole-lab manifest v1"
MANIFEST_SECTIONS = ("run", "inputs", "outputs")


class UsageError(Exception):
    """Bad flags, configuration or inputs; exit code 2."""


class ConfigError(UsageError):
    pass


# --------------------------------------------------------------------------- configuration

@dataclass(frozen=True)
class Key:
    kind: str                 # int, float, bool, str, choice, floats, ints, optint
    default: object
    choices: tuple = ()


def _parse_value(key: Key, text: str):
    t = text.strip()
    if key.kind == "int":
        return int(t)
    if key.kind == "optint":
        return None if t.lower() == "none" else int(t)
    if key.kind == "float":
        v = float(t)
        if not math.isfinite(v):
            raise ValueError("not a finite number")
        return v
    if key.kind == "bool":
        low = t.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError("expected true or false")
    if key.kind == "choice":
        if t not in key.choices:
            raise ValueError(f"expected one of {', '.join(key.choices)}")
        return t
    if key.kind == "str":
        return t
    if key.kind == "floats":
        return tuple(float(p) for p in t.split(",") if p.strip()) if t.lower() != "auto" else ()
    if key.kind == "ints":
        return _parse_ints(t)
    raise AssertionError(key.kind)


def _parse_ints(t: str) -> tuple:
    out = []
    for part in t.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, part)
            out += list(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _format_value(key: Key, v) -> str:
    if v is None:
        return "none"
    if key.kind == "bool":
        return "true" if v else "false"
    if key.kind == "float":
        return repr(float(v))
    if key.kind == "floats":
        return ", ".join(repr(float(x)) for x in v) if v else "auto"
    if key.kind == "ints":
        return ", ".join(str(int(x)) for x in v)
    return str(v)


SCHEMAS = {
    "harmonic": {
        "n": Key("optint", None),
        "abs_tol": Key("float", 1e-10),
        "rel_tol": Key("float", 1e-10),
        "scheme": Key("choice", "double-up", ("double-up", "halve-down", "golden-up")),
        "r_max": Key("float", 50.0),
        "h": Key("float", 0.05),
    },
    "spectral": {
        "potential": Key("choice", "linearized", ("linearized", "free_wormhole", "zero")),
        "n": Key("optint", None),
        "d": Key("optint", None),
        "lam_min": Key("float", 1e-3),
        "lam_max": Key("float", 1e2),
        "per_decade": Key("int", 60),
        "quick_per_decade": Key("int", 12),
        "audit_L": Key("float", 20.0),
        "audit_h": Key("float", 0.04),
        "quick": Key("bool", False),
    },
    "evolve": {
        "family": Key("choice", "harmonic-plus-bump", ("harmonic-plus-bump", "interpolating-profile", "radiation-only")),
        "degree": Key("int", 1),
        "L": Key("float", 40.0),
        "h": Key("float", 0.1),
        "T": Key("float", 20.0),
        "amplitude": Key("float", 0.1),
        "velocity_amplitude": Key("float", 0.0),
        "center": Key("float", 0.0),
        "width": Key("float", 3.0),
        "shape": Key("choice", "compact", ("compact", "gaussian")),
        "seed": Key("optint", None),
        "formulation": Key("choice", "psi", ("psi", "u", "linear-psi")),
        "order": Key("int", 4),
        "boundary": Key("choice", "causal-truncation", ("causal-truncation", "sommerfeld")),
        "cfl": Key("float", 0.5),
        "snapshot_every": Key("float", 1.0),
        "energy_every": Key("int", 0),
        "field_stride": Key("int", 4),
    },
    "resolve": {
        "A": Key("float", 10.0),
        "window": Key("float", 10.0),
        "t_match": Key("floats", ()),
        "margin_cells": Key("int", 10),
        "decay_min": Key("float", 10.0),
        "mismatch_max": Key("float", 0.2),
        "series": Key("str", "evolve_series.npy"),
    },
    "dispersive": {
        "d": Key("optint", None),
        "j": Key("int", -1),
        "source": Key("float", 1.0),
        "fit_start": Key("float", 128.0),
        "fit_end": Key("float", 1280.0),
        "min_decades": Key("float", 1.0),
        "quick_fit_end": Key("float", 405.0),
        "quick_min_decades": Key("float", 0.5),
        "quick": Key("bool", False),
    },
    "accept": {
        "criteria": Key("ints", tuple(sorted(RUNNERS))),
        "quick": Key("bool", False),
        "seed": Key("int", 0),
    },
}

COMMAND_SECTIONS = {
    "harmonic": ("harmonic",),
    "spectral": ("spectral",),
    "evolve": ("evolve", "resolve"),
    "resolve": ("evolve", "resolve"),
    "dispersive": ("dispersive",),
    "accept": ("accept",),
}


@dataclass
class ParsedConfig:
    values: dict          # section -> key -> (value, line)
    raw: dict             # manifest-only sections: section -> key -> text
    path: Optional[Path]


def read_config(path, command: str) -> ParsedConfig:
    """Parse a configuration file for ``command``; errors name file and line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration: {exc.strerror}") from None
    allowed = COMMAND_SECTIONS[command]
    values = {s: {} for s in allowed}
    raw = {s: {} for s in MANIFEST_SECTIONS}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{path}:{lineno}"
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {body!r}")
            section = body[1:-1].strip()
            if section not in allowed and section not in MANIFEST_SECTIONS:
                known = ", ".join(f"[{s}]" for s in allowed)
                raise ConfigError(f"{where}: section [{section}] does not apply to '{command}' (expected {known})")
            continue
        if "=" not in body:
            raise ConfigError(f"{where}: expected 'key = value', got {body!r}")
        if section is None:
            raise ConfigError(f"{where}: 'key = value' before any [section]")
        k, v = (p.strip() for p in body.split("=", 1))
        if section in MANIFEST_SECTIONS:
            raw[section][k] = v
            continue
        schema = SCHEMAS[section]
        if k not in schema:
            raise ConfigError(f"{where}: unknown key '{k}' in [{section}] (known: {', '.join(schema)})")
        if k in values[section]:
            raise ConfigError(f"{where}: key '{k}' repeated (first set on line {values[section][k][1]})")
        try:
            values[section][k] = (_parse_value(schema[k], v), lineno)
        except ValueError as exc:
            raise ConfigError(f"{where}: key '{k}': {exc} (got {v!r})") from None
    return ParsedConfig(values, raw, path)


def resolve_section(parsed: Optional[ParsedConfig], section: str, overrides: dict) -> dict:
    """Defaults, then the file, then command-line overrides (non-None entries)."""
    out = {k: key.default for k, key in SCHEMAS[section].items()}
    if parsed is not None:
        out.update({k: v for k, (v, _) in parsed.values.get(section, {}).items()})
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def _line_of(parsed, section, key):
    if parsed is None or key not in parsed.values.get(section, {}):
        return "command line or default"
    return f"{parsed.path}:{parsed.values[section][key][1]}"


# --------------------------------------------------------------------------- manifests

def read_manifest(path) -> dict:
    """All sections of a manifest as raw ``key -> text`` maps."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise ConfigError(f"{path}:1: not a version-1 manifest")
    out: dict = {}
    cur = None
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("["):
            cur = out.setdefault(line.strip()[1:-1], {})
        elif "=" in line and cur is not None:
            k, v = line.split("=", 1)
            cur[k.strip()] = v.strip()
        elif line.strip():
            raise ConfigError(f"{path}:{lineno}: malformed manifest line")
    return out


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


_CLOCK: Optional[tuple] = None     # (wall start, perf counter) of the current invocation


class Run:
    """One command invocation: collects outputs and writes the manifest."""

    def __init__(self, command: str, out_dir: Path, config: dict, seed, tag: str = ""):
        self.command = command
        self.out_dir = Path(out_dir)
        self.config = config            # section -> resolved dict
        self.seed = seed
        self.tag = tag
        self.outputs: list = []
        self.inputs: list = []
        self.started, self.t0 = _CLOCK or (datetime.datetime.now(datetime.timezone.utc), time.perf_counter())
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def add(self, *paths) -> None:
        for p in paths:
            if isinstance(p, (list, tuple)):
                self.add(*p)
            else:
                self.outputs.append(Path(p))

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        with open(p, "w", newline="\n") as fh:
            fh.write(content)
        self.add(p)
        return p

    @property
    def manifest_path(self) -> Path:
        stem = f"{self.command}_{self.tag}" if self.tag else self.command
        return self.path(f"{stem}_manifest.txt")

    def write_manifest(self) -> Path:
        lines = [MANIFEST_HEADER, "[run]", f"command = {self.command}",
                 f"seed = {'none' if self.seed is None else self.seed}", f"version = {__version__}",
                 f"started = {self.started.isoformat(timespec='seconds')}",
                 f"elapsed_s = {time.perf_counter() - self.t0:.3f}"]
        for section, vals in self.config.items():
            lines.append(f"[{section}]")
            schema = SCHEMAS[section]
            lines += [f"{k} = {_format_value(schema[k], v)}" for k, v in vals.items()]
        if self.inputs:
            lines.append("[inputs]")
            lines += [f"{p.name} = {sha256(p)}" for p in self.inputs]
        lines.append("[outputs]")
        seen = set()
        for p in self.outputs:
            if p.name in seen:
                continue
            seen.add(p.name)
            lines.append(f"{p.name} = {sha256(p)}")
        p = self.manifest_path
        with open(p, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        return p


# --------------------------------------------------------------------------- harmonic

def cmd_harmonic(args, parsed) -> int:
    cfg = resolve_section(parsed, "harmonic", {"n": args.n})
    n = cfg["n"]
    if n is None:
        raise UsageError("harmonic needs a degree: --n N or 'n = N' in [harmonic]")
    if n < 0:
        raise UsageError(f"degree must be nonnegative, got n = {n}")
    m = int(round(cfg["r_max"] / cfg["h"]))
    samples = cfg["h"] * np.arange(-m, m + 1)
    tol = ToleranceSpec(cfg["abs_tol"], cfg["rel_tol"])
    hm = shoot_harmonic(n, tol=tol, scheme=cfg["scheme"], samples=samples)
    run = Run("harmonic", args.out_dir, {"harmonic": cfg}, None, f"n{n}")
    csv = run.path(f"harmonic_n{n}.csv")
    save_csv(hm, csv)
    run.add(csv)
    dat = run.path(f"harmonic_n{n}.dat")
    with open(dat, "w", newline="\n") as fh:
        fh.write(f"# wormhole-lab harmonic v1\n# n={n} alpha_star={hm.alpha_star!r}\n# r Q Qprime\n")
        for row in zip(hm.r, hm.Q, hm.Qprime):
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    run.add(dat)
    res = ode_residual(hm, 0.05) if n > 0 else 0.0
    summary = [
        "# wormhole-lab harmonic-summary v1",
        f"n = {n}",
        f"alpha_star = {hm.alpha_star!r}",
        f"bracket = {hm.bracket[0]!r}, {hm.bracket[1]!r}",
        f"alpha_n = {hm.alpha_n!r}",
        f"tail_b = {hm.tail_b!r}",
        f"tail_fit_residual = {hm.residual!r}",
        f"symmetry_defect = {hm.symmetry_defect!r}",
        f"ode_residual_h0.05 = {res!r}",
        f"low_confidence_decisions = {hm.low_confidence}",
    ]
    run.text(f"harmonic_n{n}_summary.txt", "\n".join(summary) + "\n")
    print(f"Q_{n}: alpha* = {hm.alpha_star:.15g}, alpha_n = {hm.alpha_n:.10g}, "
          f"symmetry defect = {hm.symmetry_defect:.2e}")
    print(f"manifest: {run.write_manifest()}")
    return 0


# --------------------------------------------------------------------------- spectral

def load_stored_map(out_dir: Path, n: int, run: Optional[Run] = None):
    """Rebuild Q_n for a stored harmonic_n{n}.csv and check it against the file."""
    p = Path(out_dir) / f"harmonic_n{n}.csv"
    if not p.exists():
        raise UsageError(f"no harmonic map for degree {n} in {out_dir}: run "
                         f"'python -m wormhole_lab.cli harmonic --n {n} --out-dir {out_dir}' first")
    try:
        data = load_csv(p)
    except (ValueError, KeyError, IndexError) as exc:
        raise UsageError(f"unreadable harmonic map: {exc}") from None
    if data["n"] != n:
        raise UsageError(f"{p}: stores degree {data['n']}, expected {n}")
    hm = shoot_harmonic(n)
    if abs(hm.alpha_star - data["alpha_star"]) > 1e-8:
        raise UsageError(f"{p}: stored alpha* = {data['alpha_star']!r} disagrees with a fresh shot "
                         f"({hm.alpha_star!r}); regenerate it with the harmonic command")
    if run is not None:
        run.inputs.append(p)
    return hm


def cmd_spectral(args, parsed) -> int:
    kind = None
    if args.zero:
        kind = "zero"
    elif args.dim is not None:
        kind = "free_wormhole"
    elif args.n is not None:
        kind = "linearized"
    cfg = resolve_section(parsed, "spectral", {"potential": kind, "n": args.n, "d": args.dim,
                                               "quick": True if args.quick else None})
    run = Run("spectral", args.out_dir, {"spectral": cfg}, None)
    hm = None
    if cfg["potential"] == "linearized":
        if cfg["n"] is None:
            raise UsageError("spectral needs --n N, --dim d or --zero")
        if cfg["n"] < 0:
            raise UsageError(f"degree must be nonnegative, got n = {cfg['n']}")
        hm = load_stored_map(Path(args.out_dir), cfg["n"], run)
        pot = build_potential("linearized", harmonic=hm)
        tag = f"n{cfg['n']}"
    elif cfg["potential"] == "free_wormhole":
        if cfg["d"] is None or cfg["d"] < 2:
            raise UsageError("free wormhole potential needs --dim d with d >= 2")
        pot = build_potential("free_wormhole", d=cfg["d"])
        tag = f"d{cfg['d']}"
    else:
        pot = build_potential("custom", U=lambda r: 0.0 * r)
        tag = "zero"
    run.tag = tag
    per = cfg["quick_per_decade"] if cfg["quick"] else cfg["per_decade"]
    lam = log_lambda_grid(cfg["lam_min"], cfg["lam_max"], per)
    W = wronskian(pot, lam)
    w1, w2 = spectral_weights(pot, lam)
    csv = run.path(f"spectral_{tag}.csv")
    write_spectral_table(csv, lam, W, w1, w2)
    run.add(csv)
    run.add(write_table(run.path(f"spectral_{tag}_table"), "spectral-table",
                        {"lambda": lam, "re_W": W.real, "im_W": W.imag, "abs_W": np.abs(W),
                         "omega1": w1, "omega2": w2}))
    if cfg["potential"] != "zero":
        rep = resonance_report(pot, hm)
        run.text(f"spectral_{tag}_resonance.txt", rep.to_text())
    grid = RadialGrid.uniform(-cfg["audit_L"], cfg["audit_L"], cfg["audit_h"])
    M = spectral_measure(pot, grid)
    cols = {"bump": [], "plancherel_defect": [], "round_trip": []}
    for k, f in enumerate(plancherel_bumps(grid.r())):
        F = fourier_forward(M, f)
        back = fourier_inverse(M, *F)
        cols["bump"].append(k)
        cols["plancherel_defect"].append(plancherel_defect(M, f, F))
        cols["round_trip"].append(float(np.sqrt(np.sum((back - f) ** 2) / np.sum(f**2))))
    run.add(write_table(run.path(f"spectral_{tag}_plancherel"), "plancherel", cols))
    print(f"spectral {tag}: {lam.size} lambda samples, worst Plancherel defect "
          f"{max(cols['plancherel_defect']):.2e}, worst round trip {max(cols['round_trip']):.2e}")
    print(f"manifest: {run.write_manifest()}")
    return 0


# --------------------------------------------------------------------------- evolve

def _evolve_setup(cfg: dict, seed):
    if cfg["L"] <= 0 or cfg["h"] <= 0 or cfg["T"] <= 0:
        raise UsageError("[evolve] L, h and T must be positive")
    if cfg["snapshot_every"] <= 0:
        raise UsageError("[evolve] snapshot_every must be positive")
    grid = RadialGrid.uniform(-cfg["L"], cfg["L"], cfg["h"])
    degree = cfg["degree"]
    if degree < 0:
        raise UsageError("[evolve] degree must be nonnegative")
    hm = shoot_harmonic(degree) if degree > 0 or cfg["formulation"] == "u" else None
    form = cfg["formulation"]
    ecfg = EvolutionConfig(grid, cfg["T"], order=cfg["order"], boundary=cfg["boundary"], formulation=form,
                           cfl=cfg["cfl"], harmonic=hm, snapshot_every=cfg["snapshot_every"])
    return grid, hm, ecfg


def cmd_evolve(args, parsed) -> int:
    if parsed is None:
        raise UsageError("evolve needs --config with an [evolve] section")
    cfg = resolve_section(parsed, "evolve", {"seed": args.seed})
    grid, hm, ecfg = _evolve_setup(cfg, cfg["seed"])
    data = make_initial_data(cfg["family"], grid, cfg["degree"], hm, amplitude=cfg["amplitude"],
                             center=cfg["center"], width=cfg["width"],
                             velocity_amplitude=cfg["velocity_amplitude"], seed=cfg["seed"], shape=cfg["shape"])
    if ecfg.formulation == "u":
        data = psi_to_u(data, hm)
    if ecfg.formulation == "linear-psi" and cfg["degree"] != 0:
        raise UsageError("[evolve] the linear-psi formulation is for degree 0 data")
    res = evolve(ecfg, data, energy_every=cfg["energy_every"])
    echo = {"evolve": cfg}
    if parsed.values["resolve"]:
        echo["resolve"] = resolve_section(parsed, "resolve", {})      # carried for a later resolve run
    run = Run("evolve", args.out_dir, echo, cfg["seed"])
    tr = res.energy
    run.add(write_table(run.path("evolve_energy"), "energy", {"t": tr.times, "energy": tr.energies,
                                                              "drift": tr.drift}))
    r = grid.r()
    idx = np.arange(0, r.size, max(1, cfg["field_stride"]))
    cols = {"t": np.repeat(res.times, idx.size), "r": np.tile(r[idx], res.times.size),
            "field": res.fields[:, idx].ravel(), "velocity": res.velocities[:, idx].ravel()}
    run.add(write_table(run.path("evolve_fields"), "fields", cols, {"formulation": res.formulation}))
    series = np.concatenate([res.times[:, None], res.fields, res.velocities], axis=1)
    sp = run.path("evolve_series.npy")
    np.save(sp, series)
    run.add(sp)
    print(f"evolved to T = {res.times[-1]:g} ({res.times.size} snapshots), max energy drift {tr.max_drift:.2e}")
    print(f"manifest: {run.write_manifest()}")
    return 0


# --------------------------------------------------------------------------- resolve

def _load_series(path: Path, ecfg: EvolutionConfig, degree: int) -> EvolutionResult:
    if not path.exists():
        raise UsageError(f"series {path} not found: run the evolve command with the same [evolve] section first")
    arr = np.load(path, allow_pickle=False)
    n = ecfg.grid.size
    if arr.ndim != 2 or arr.shape[1] != 2 * n + 1:
        raise UsageError(f"{path}: series shape {arr.shape} does not match the [evolve] grid ({n} nodes)")
    times, fields, vels = arr[:, 0], arr[:, 1:n + 1], arr[:, n + 1:]
    return EvolutionResult(ecfg, times, fields, vels, EnergyTrace(times, np.zeros_like(times)),
                           ecfg.formulation, degree)


def cmd_resolve(args, parsed) -> int:
    if parsed is None:
        raise UsageError("resolve needs --config with the [evolve] section of the run (an evolve manifest works)")
    ec = resolve_section(parsed, "evolve", {})
    rc = resolve_section(parsed, "resolve", {})
    if ec["formulation"] != "psi":
        raise UsageError("resolve works on psi-form series")
    grid, hm, ecfg = _evolve_setup(ec, ec["seed"])
    sp = Path(args.series) if args.series else Path(args.out_dir) / rc["series"]
    series = _load_series(sp, ecfg, ec["degree"])
    run = Run("resolve", args.out_dir, {"evolve": ec, "resolve": rc}, ec["seed"])
    run.inputs.append(sp)
    curve = local_energy(series, rc["A"], hm)
    T = float(series.times[-1])
    report = ResolutionReport()
    fac = curve.decay_factor(T)
    report.add("local_energy_decay_factor", fac, fac >= rc["decay_min"],
               f"peak {curve.peak:.3e} at t = {curve.peak_time:g}, value {curve.at(T):.3e} at t = {T:g}")
    t_match = rc["t_match"] or _auto_match_times(series.times)
    cols = {"T_match": [], "t": [], "mismatch": []}
    prev = None
    for tm in t_match:
        try:
            m = extract_radiation(series, tm, rc["window"], hm, rc["margin_cells"])
        except ResolutionError as exc:
            raise UsageError(f"T_match = {tm:g}: {exc}; enlarge L in [evolve] or shrink window") from None
        cols["T_match"] += [m.T_match] * m.times.size
        cols["t"] += list(m.times)
        cols["mismatch"] += list(m.mismatch)
        report.add(f"radiation_mismatch_T{m.T_match:g}", m.relative, m.relative <= rc["mismatch_max"],
                   f"worst window mismatch {m.max_mismatch:.3e}, radiation norm {m.radiation_norm:.3e}")
        if prev is not None:
            report.add(f"mismatch_T{m.T_match:g}_below_T{prev.T_match:g}", m.max_mismatch,
                       m.max_mismatch <= prev.max_mismatch)
        prev = m
    # nothing is written until every diagnostic has succeeded
    run.add(write_table(run.path("resolve_local_energy"), "local-energy",
                        {"t": curve.times, "energy": curve.energies}, {"A": curve.A}))
    run.add(write_table(run.path("resolve_radiation"), "radiation", cols, {"window": rc["window"]}))
    run.text("resolve_report.txt", report.to_text())
    print(report.to_text(), end="")
    print(f"manifest: {run.write_manifest()}")
    return 0


def _auto_match_times(times) -> tuple:
    T0, T1 = float(times[0]), float(times[-1])
    out = []
    for frac in (0.5, 0.75):
        k = int(np.argmin(np.abs(times - (T0 + frac * (T1 - T0)))))
        out.append(float(times[k]))
    return tuple(sorted(set(out)))


# --------------------------------------------------------------------------- dispersive

def cmd_dispersive(args, parsed) -> int:
    cfg = resolve_section(parsed, "dispersive", {"d": args.dim, "j": args.j,
                                                 "quick": True if args.quick else None})
    d, j = cfg["d"], cfg["j"]
    if d is None:
        raise UsageError("dispersive needs --dim d")
    if d < 2:
        raise UsageError(f"dimension must be at least 2, got d = {d}")
    s = 2.0**j
    end = cfg["quick_fit_end"] if cfg["quick"] else cfg["fit_end"]
    need = cfg["quick_min_decades"] if cfg["quick"] else cfg["min_decades"]
    res = dispersive_probe(d, j, fit_window=(cfg["fit_start"] / s, end / s), source=cfg["source"],
                           min_decades=need)
    tag = f"d{d}_j{j}"
    run = Run("dispersive", args.out_dir, {"dispersive": cfg}, None, tag)
    run.add(write_table(run.path(f"dispersive_{tag}"), "dispersive", {"t": res.t, "sup": res.sup},
                        {"d": d, "j": j}))
    lines = [
        "# wormhole-lab dispersive-exponent v1",
        f"d = {d}",
        f"j = {j}",
        f"exponent = {res.exponent!r}",
        f"expected = {d / 2.0!r}",
        f"prefactor = {res.prefactor!r}",
        f"fit_residual = {res.residual!r}",
        f"fit_window = {res.window[0]!r}, {res.window[1]!r}",
        f"decades = {math.log10(res.window[1] / res.window[0])!r}",
        f"plateau = {res.plateau!r}",
        f"source_radius = {res.source!r}",
        f"quadrature_nodes = {res.nodes}",
        f"frequency_bump = {LP_BUMP_DESCRIPTION}",
    ]
    run.text(f"dispersive_{tag}_exponent.txt", "\n".join(lines) + "\n")
    print(f"d = {d}, j = {j}: sup-norm decay exponent {res.exponent:.4f} (d/2 = {d / 2:g})")
    print(f"manifest: {run.write_manifest()}")
    return 0


# --------------------------------------------------------------------------- accept

def _reference_outputs(parsed: Optional[ParsedConfig], out_dir: Path, cfg: dict) -> Optional[dict]:
    """Output hashes of an earlier acceptance run with the same configuration."""
    if parsed is not None and parsed.raw["run"].get("command") == "accept":
        return dict(parsed.raw["outputs"])
    old = out_dir / "accept_manifest.txt"
    if not old.exists():
        return None
    try:
        prev = read_config(old, "accept")
    except ConfigError:
        return None
    if resolve_section(prev, "accept", {}) != cfg:
        return None
    return dict(prev.raw["outputs"])


def cmd_accept(args, parsed):
    crit = _parse_ints(args.criteria) if args.criteria else None
    cfg = resolve_section(parsed, "accept", {"criteria": crit, "quick": True if args.quick else None,
                                             "seed": args.seed})
    bad = [k for k in cfg["criteria"] if k not in RUNNERS]
    if bad:
        raise UsageError(f"unknown criteria {bad}; choose from 1-{max(RUNNERS)}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reference = _reference_outputs(parsed, out, cfg)
    run = Run("accept", out, {"accept": cfg}, cfg["seed"])
    ctx = AcceptanceContext(out_dir=out, quick=cfg["quick"], seed=cfg["seed"], stored_maps=out, reference=reference)
    report = run_acceptance(ctx, cfg["criteria"], log=None if args.silent else print)
    run.add(ctx.outputs)
    run.text("acceptance_summary.txt", report.to_text())
    for line in report.summary_lines():
        print(line)
    print(f"manifest: {run.write_manifest()}")
    if not report.passed:
        print("failed criteria: " + ", ".join(str(k) for k in report.failed_criteria()))
        for row in report.rows:
            if row.passed is False:
                print("  " + row.line())
    return report


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wormhole-lab", description="Wave maps on the wormhole: numerical harness.")
    p.add_argument("--version", action="version", version=f"wormhole-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key = value configuration or an earlier manifest")
        sp.add_argument("--out-dir", type=Path, default=Path("."), help="directory for outputs and manifest")
        sp.add_argument("--seed", type=int, default=None, help="seed for randomized data")
        sp.add_argument("--quick", action="store_true", help="reduced variants where a command has them")

    sp = sub.add_parser("harmonic", help="shoot the harmonic map Q_n")
    sp.add_argument("--n", type=int)
    common(sp)
    sp = sub.add_parser("spectral", help="Wronskian, weights, resonance report and Plancherel audit")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--n", type=int, help="linearized operator about Q_n (needs harmonic_n{N}.csv)")
    g.add_argument("--dim", type=int, help="free wormhole operator in dimension d")
    g.add_argument("--zero", action="store_true", help="zero potential (closed forms)")
    common(sp)
    sp = sub.add_parser("evolve", help="evolve the configured data")
    common(sp)
    sp = sub.add_parser("resolve", help="local energy and radiation diagnostics of an evolve series")
    sp.add_argument("--series", help="series file (default: <out-dir>/evolve_series.npy)")
    common(sp)
    sp = sub.add_parser("dispersive", help="frequency-localized sup-norm decay probe")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--j", type=int, default=None)
    common(sp)
    sp = sub.add_parser("accept", help="run the acceptance suite")
    sp.add_argument("--criteria", help="subset such as 1,2,6 or 1-5 (default: all)")
    sp.add_argument("--silent", action="store_true", help="print only the per-criterion summary")
    common(sp)
    return p


COMMANDS: dict = {
    "harmonic": cmd_harmonic,
    "spectral": cmd_spectral,
    "evolve": cmd_evolve,
    "resolve": cmd_resolve,
    "dispersive": cmd_dispersive,
}


def main(argv=None) -> int:
    global _CLOCK
    args = build_parser().parse_args(argv)
    _CLOCK = (datetime.datetime.now(datetime.timezone.utc), time.perf_counter())
    try:
        parsed = read_config(args.config, args.command) if args.config else None
        if args.command == "accept":
            return 0 if cmd_accept(args, parsed).passed else 1
        return COMMANDS[args.command](args, parsed)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # propagated computation errors
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
