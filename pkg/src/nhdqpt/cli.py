"""Command-line front end: ``nhdqpt <task> --config run.toml --out dir``.

Every task writes CSV (header row, shortest round-trip floats, ``\\n`` line
endings) and/or JSON files plus a ``manifest.json`` holding the config echo,
tool version, wall-clock time and a sha256 checksum per output file.

Exit codes: 0 success, 1 configuration error, 2 numerical-domain error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import build_model, dispersion
from .config import TASKS, RunConfig, parse_config
from .dilation import DilationConfig, max_infidelity, norm_drift, simulate_dilated
from .dynphase import default_bz, dtop_jump, dtop_series, nearest_critical_time, phase_heatmap
from .errors import ConfigError, CriticalTimeError, NumericalDomainError
from .quench import critical_set, detect_cusps, dqpt_report, rate_trace
from .topology import (
    ParameterAxis,
    exceptional_points,
    gap_condition,
    gapless_momenta,
    phase_diagram,
    verify_symmetries,
    winding_number,
)


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_clock: float
    outputs: dict = field(default_factory=dict)  # file name -> sha256

    def to_dict(self):
        return {"config": self.config, "version": self.version, "wall_clock": self.wall_clock,
                "outputs": self.outputs}


def _fmt(x):
    if isinstance(x, (str, bool)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class _Writer:
    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs = {}

    def _save(self, name, text):
        data = text.encode("utf-8")
        (self.dir / name).write_bytes(data)
        self.outputs[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name, header, rows):
        lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
        self._save(name, "\n".join(lines) + "\n")

    def json(self, name, obj):
        self._save(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _model(cfg):
    return build_model(cfg.family, **cfg.params)


def _task_spectrum(cfg, out):
    m = _model(cfg)
    k = np.linspace(-np.pi, np.pi, cfg.grid.n_k)
    E = dispersion(m, k)
    ha, hb, ga, gb = m.profiles(k)
    norm, dot = gap_condition(m, k)
    out.csv("spectrum.csv", ["k", "re_E", "im_E", "h_a", "h_b", "g_a", "g_b", "h2_minus_g2", "h_dot_g"],
            zip(k, E.real, E.imag, ha, hb, ga, gb, norm, dot))
    gl = gapless_momenta(m)
    summary = {"family": m.family, "axes": list(m.axes), "params": cfg.params,
               "gapless_momenta": gl.momenta, "gap_candidates": gl.candidates}
    eps = exceptional_points(m)
    summary["exceptional_points"] = eps.points.tolist()
    try:
        summary["winding_number"] = winding_number(m, cfg.grid.n_k, cfg.tolerances.gapless).w
    except NumericalDomainError as exc:
        summary["winding_number"] = None
        summary["winding_error"] = str(exc)
    sym = verify_symmetries(m)
    summary["symmetries"] = {n: {"holds": sym.flags[n], "residual": sym.residuals[n], "operator": sym.operators[n]}
                             for n in sym.flags}
    out.json("spectrum.json", summary)


def _task_phase_diagram(cfg, out):
    a1, a2 = (ParameterAxis(a.name, a.start, a.stop, a.steps) for a in cfg.axes)
    fixed = {k: v for k, v in cfg.params.items() if k not in (a1.name, a2.name)}
    grid = phase_diagram(cfg.family, a1, a2, fixed, cfg.grid.n_k, cfg.workers)
    rows = []
    for i, x in enumerate(a1.values):
        for j, y in enumerate(a2.values):
            rows.append((x, y, grid.values[i, j], grid.status[i, j]))
    out.csv("phase_diagram.csv", [a1.name, a2.name, "w", "status"], rows)


def _task_quench(cfg, out):
    m = _model(cfg)
    g = cfg.grid
    trace = rate_trace(m, g.t_min, g.t_max, g.dt, g.rate_n_k, cfg.workers)
    out.csv("rate.csv", ["t", "rate"], zip(trace.times, trace.rate))
    cusps = detect_cusps(trace, cfg.tolerances.cusp_threshold)
    out.csv("cusps.csv", ["t"], ((t,) for t in cusps))
    cs = critical_set(m, range(1, 1 + _n_needed(m, g.t_max)))
    rows = sorted(((t, k, n) for (k, n), t in cs.times.items() if g.t_min <= t <= g.t_max))
    out.csv("critical_times.csv", ["t", "k_c", "n"], rows)


def _n_needed(model, t_max):
    cs = critical_set(model, (1,))
    if not cs.periods:
        return 1
    return max(1, int(math.ceil(t_max / min(cs.periods) + 0.5)) + 1)


def _task_dtop(cfg, out):
    m = _model(cfg)
    g = cfg.grid
    n = int(round((g.t_max - g.t_min) / g.dt))
    ts = g.t_min + g.dt * np.arange(n + 1)
    ts = np.array([t for t in ts if nearest_critical_time(m, t) >= 1e-6])
    nu = dtop_series(m, ts, g.n_k, None, cfg.workers)
    out.csv("dtop.csv", ["t", "nu"], zip(ts, nu))

    delta = cfg.tolerances.dtop_delta
    cs = critical_set(m, range(1, 1 + _n_needed(m, g.t_max)))
    jumps, seen = [], []
    for (k, n_), tc in sorted(cs.times.items(), key=lambda kv: (kv[1], abs(kv[0][0]))):
        if not (g.t_min + delta <= tc <= g.t_max - delta) or any(abs(tc - s) < 1e-9 for s in seen):
            continue
        seen.append(tc)
        k = abs(k)
        try:
            j = dtop_jump(m, tc, delta, g.n_k)
        except CriticalTimeError:
            continue  # another critical time lies within delta
        jumps.append((tc, k, n_, j.raw, j.boundary_drift, j.jump))
    out.csv("dtop_jumps.csv", ["t_c", "k_c", "n", "raw", "boundary_drift", "jump"], jumps)

    lo, hi = (0.0, np.pi) if default_bz(m) == "reduced" else (-np.pi, np.pi)
    hk = np.linspace(lo, hi, g.heatmap_n_k)
    ht = np.linspace(g.t_min, g.t_max, g.heatmap_n_t)
    wrapped, unwrapped = phase_heatmap(m, hk, ht)
    rows = ((hk[j], ht[i], wrapped[i, j], unwrapped[i, j]) for i in range(len(ht)) for j in range(len(hk)))
    out.csv("phase_heatmap.csv", ["k", "t", "phi_g_wrapped", "phi_g_unwrapped"], rows)


def _task_dilation(cfg, out):
    m = _model(cfg)
    d = cfg.dilation
    if d.k is not None:
        ks = d.k
    else:
        ks = sorted(np.random.default_rng(cfg.seed).uniform(-np.pi, np.pi, d.n_random_k).tolist())
    psi0 = np.asarray(d.psi0, dtype=complex)
    psi0 = psi0 / np.linalg.norm(psi0)
    rows, per_k = [], []
    for k in ks:
        frames, m0 = simulate_dilated(m, k, psi0, DilationConfig(d.m0, d.t_max, d.n_steps, k))
        for f in frames:
            rows.append((k, f.t, f.infidelity, f.hermiticity_residual, *f.A.real, *f.B.real))
        per_k.append({"k": k, "m0": m0, "max_infidelity": max_infidelity(frames),
                      "norm_drift": norm_drift(frames),
                      "max_hermiticity_residual": max(f.hermiticity_residual for f in frames),
                      "max_plus_residual": max(f.plus_residual for f in frames)})
    header = ["k", "t", "infidelity", "hermiticity_residual"] + [f"A{i}" for i in range(4)] + [f"B{i}" for i in range(4)]
    out.csv("dilation_frames.csv", header, rows)
    out.json("dilation_summary.json", {"max_infidelity": max(p["max_infidelity"] for p in per_k), "runs": per_k})


def _task_report(cfg, out):
    rep = dqpt_report(_model(cfg), cfg.grid.n_k)
    out.json("report.json", rep.to_dict())


_TASKS = {
    "spectrum": _task_spectrum,
    "phase-diagram": _task_phase_diagram,
    "quench": _task_quench,
    "dtop": _task_dtop,
    "dilation-check": _task_dilation,
    "report": _task_report,
}


def run(config: RunConfig) -> RunManifest:
    """Execute the configured task and write its outputs plus manifest.json."""
    start = time.perf_counter()
    out = _Writer(config.out_dir)
    _TASKS[config.task](config, out)
    outputs = dict(out.outputs)
    manifest = RunManifest(config.echo(), __version__, time.perf_counter() - start, outputs)
    (out.dir / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return manifest


def verify_manifest(out_dir) -> bool:
    """Recompute the checksums listed in ``out_dir/manifest.json``."""
    d = Path(out_dir)
    man = json.loads((d / "manifest.json").read_text())
    return all(hashlib.sha256((d / n).read_bytes()).hexdigest() == h for n, h in man["outputs"].items())


def _parser():
    p = argparse.ArgumentParser(prog="nhdqpt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="task", required=True)
    for task in TASKS:
        s = sub.add_parser(task)
        s.add_argument("--config", type=Path, help="TOML run description")
        s.add_argument("--out", help="output directory (overrides output.dir)")
        s.add_argument("--workers", type=int, help="worker processes (overrides run.workers)")
        s.add_argument("--seed", type=int, help="seed for randomized sampling (overrides run.seed)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text, task=args.task)
        problems = []
        if args.workers is not None and args.workers < 1:
            problems.append("--workers: must be at least 1")
        if args.seed is not None and args.seed < 0:
            problems.append("--seed: must be non-negative")
        if problems:
            raise ConfigError(problems)
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"config error: {issue}", file=sys.stderr)
        return 1
    if args.out:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        manifest = run(cfg)
    except NumericalDomainError as exc:
        print(f"{cfg.task}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for name in sorted(manifest.outputs):
        print(Path(cfg.out_dir) / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
