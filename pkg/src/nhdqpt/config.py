"""Run configuration: a TOML document with a fixed schema.

Example::

    task = "quench"

    [model]
    family = "lkc"
    J = 1.0
    Delta = 1.0
    u = 0.0
    v = 0.3

    [grid]
    t_min = 0.0
    t_max = 10.0
    dt = 1e-3

Sections and their keys (defaults in brackets):

    task            spectrum | phase-diagram | quench | dtop | dilation-check | report
    [model]         family [lkc], then the family's parameters
    [grid]          n_k [4097], rate_n_k [4096], t_min [0], t_max [10], dt [1e-2],
                    heatmap_n_k [201], heatmap_n_t [201]
    [phase_diagram] axis1, axis2: tables with name, start, stop, steps
    [dilation]      m0 [20], t_max [3], n_steps [3000], k [list, optional],
                    n_random_k [5], psi0 [[1, 0]]
    [tolerances]    gapless [1e-8], cusp_threshold [50], dtop_delta [0.05]
    [output]        dir ["out"]
    [run]           workers [1], seed [0]
"""

from __future__ import annotations

import dataclasses
import math
import re
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bloch import LKCParams, NNNLKCParams, NRSSHParams
from .errors import ConfigError

TASKS = ("spectrum", "phase-diagram", "quench", "dtop", "dilation-check", "report")
FAMILIES = {"lkc": LKCParams, "nnn_lkc": NNNLKCParams, "nrssh": NRSSHParams}


@dataclass
class GridConfig:
    n_k: int = 4097
    rate_n_k: int = 4096
    t_min: float = 0.0
    t_max: float = 10.0
    dt: float = 1e-2
    heatmap_n_k: int = 201
    heatmap_n_t: int = 201


@dataclass
class AxisConfig:
    name: str
    start: float
    stop: float
    steps: int


@dataclass
class DilationSettings:
    m0: float = 20.0
    t_max: float = 3.0
    n_steps: int = 3000
    k: list | None = None
    n_random_k: int = 5
    psi0: list = field(default_factory=lambda: [1.0, 0.0])


@dataclass
class Tolerances:
    gapless: float = 1e-8
    cusp_threshold: float = 50.0
    dtop_delta: float = 0.05


@dataclass
class RunConfig:
    task: str
    family: str = "lkc"
    params: dict = field(default_factory=dict)
    grid: GridConfig = field(default_factory=GridConfig)
    axes: tuple = ()
    dilation: DilationSettings = field(default_factory=DilationSettings)
    tolerances: Tolerances = field(default_factory=Tolerances)
    out_dir: str = "out"
    workers: int = 1
    seed: int = 0

    def echo(self):
        """Plain-data copy for the manifest."""
        d = dataclasses.asdict(self)
        d["axes"] = [dataclasses.asdict(a) for a in self.axes]
        return d


class _Issues:
    def __init__(self, text):
        self.items = []
        self._lines = text.splitlines()

    def line_of(self, section, key):
        """Best-effort 1-based line number of ``key`` inside ``[section]``."""
        current = ""
        pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
        for i, line in enumerate(self._lines, 1):
            m = re.match(r"^\s*\[\s*([^\]]+?)\s*\]", line)
            if m:
                current = m.group(1)
                continue
            if current == section and pat.match(line):
                return i
        return None

    def add(self, section, key, msg):
        where = f"{section}.{key}" if section else key
        line = self.line_of(section, key)
        self.items.append(f"{where}" + (f" (line {line})" if line else "") + f": {msg}")


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _is_real(x):
    return (_is_int(x) or isinstance(x, float)) and math.isfinite(x)


def _take(table, section, spec, issues, target):
    """Copy the keys of ``table`` named in ``spec`` onto ``target`` with type checks."""
    for key, value in table.items():
        if key not in spec:
            issues.add(section, key, f"unknown key (allowed: {', '.join(sorted(spec))})")
            continue
        kind, check, what = spec[key]
        if kind == "int" and not _is_int(value):
            issues.add(section, key, f"expected an integer, got {value!r}")
        elif kind == "real" and not _is_real(value):
            issues.add(section, key, f"expected a real number, got {value!r}")
        elif kind == "str" and not isinstance(value, str):
            issues.add(section, key, f"expected a string, got {value!r}")
        elif check is not None and not check(value):
            issues.add(section, key, f"{what}, got {value!r}")
        else:
            setattr(target, key, float(value) if kind == "real" else value)


_pos = (lambda x: x > 0, "must be positive")
_ge2 = (lambda x: x >= 2, "grid counts must be at least 2")
_nonneg = (lambda x: x >= 0, "must be non-negative")

GRID_SPEC = {
    "n_k": ("int", *_ge2),
    "rate_n_k": ("int", *_ge2),
    "t_min": ("real", *_nonneg),
    "t_max": ("real", *_nonneg),
    "dt": ("real", *_pos),
    "heatmap_n_k": ("int", *_ge2),
    "heatmap_n_t": ("int", *_ge2),
}
TOL_SPEC = {
    "gapless": ("real", *_pos),
    "cusp_threshold": ("real", *_pos),
    "dtop_delta": ("real", *_pos),
}
RUN_SPEC = {"workers": ("int", lambda x: x >= 1, "must be at least 1"), "seed": ("int", *_nonneg)}


def _parse_model(table, issues, cfg):
    family = table.get("family", "lkc")
    if not isinstance(family, str) or family.replace("-", "_") not in FAMILIES:
        issues.add("model", "family", f"expected one of {sorted(FAMILIES)}, got {family!r}")
        return
    cfg.family = family.replace("-", "_")
    names = {f.name for f in dataclasses.fields(FAMILIES[cfg.family])}
    for key, value in table.items():
        if key == "family":
            continue
        if key not in names:
            issues.add("model", key, f"unknown parameter for {cfg.family} (allowed: {', '.join(sorted(names))})")
        elif not _is_real(value):
            issues.add("model", key, f"expected a real number, got {value!r}")
        else:
            cfg.params[key] = float(value)


def _parse_axes(table, issues, cfg):
    axes = []
    for name in ("axis1", "axis2"):
        sec = f"phase_diagram.{name}"
        ax = table.get(name)
        if not isinstance(ax, dict):
            issues.add("phase_diagram", name, "missing axis table with name, start, stop, steps")
            continue
        spec = {
            "name": ("str", None, ""),
            "start": ("real", None, ""),
            "stop": ("real", None, ""),
            "steps": ("int", *_ge2),
        }
        missing = [k for k in spec if k not in ax]
        for k in missing:
            issues.add(sec, k, "missing")
        holder = AxisConfig("", 0.0, 0.0, 0)
        before = len(issues.items)
        _take(ax, sec, spec, issues, holder)
        if missing or len(issues.items) > before:
            continue
        if not holder.stop > holder.start:
            issues.add(sec, "stop", f"empty parameter range [{holder.start}, {holder.stop}]")
            continue
        axes.append(holder)
    for key in table:
        if key not in ("axis1", "axis2"):
            issues.add("phase_diagram", key, "unknown key (allowed: axis1, axis2)")
    if len(axes) == 2:
        if axes[0].name == axes[1].name:
            issues.add("phase_diagram.axis2", "name", "both axes sweep the same parameter")
        allowed = {f.name for f in dataclasses.fields(FAMILIES.get(cfg.family, LKCParams))}
        for i, ax in enumerate(axes, 1):
            if ax.name not in allowed:
                issues.add(f"phase_diagram.axis{i}", "name", f"{ax.name!r} is not a {cfg.family} parameter")
        cfg.axes = tuple(axes)


def _parse_dilation(table, issues, cfg):
    d = cfg.dilation
    spec = {
        "m0": ("real", lambda x: x > 1, "must exceed 1"),
        "t_max": ("real", *_nonneg),
        "n_steps": ("int", lambda x: x >= 16, "must be at least 16"),
        "n_random_k": ("int", lambda x: x >= 1, "must be at least 1"),
    }
    rest = {k: v for k, v in table.items() if k not in ("k", "psi0")}
    _take(rest, "dilation", {**spec}, issues, d)
    if "k" in table:
        ks = table["k"]
        if not isinstance(ks, list) or not ks or not all(_is_real(x) for x in ks):
            issues.add("dilation", "k", f"expected a non-empty list of real numbers, got {ks!r}")
        else:
            d.k = [float(x) for x in ks]
    if "psi0" in table:
        p = table["psi0"]
        if (not isinstance(p, list) or len(p) != 2 or not all(_is_real(x) for x in p)
                or math.hypot(*p) == 0):
            issues.add("dilation", "psi0", f"expected two real amplitudes, not both zero, got {p!r}")
        else:
            d.psi0 = [float(x) for x in p]


def parse_config(text: str, task: str | None = None) -> RunConfig:
    """Validate a TOML run description; raises ConfigError listing every problem."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    issues = _Issues(text)
    file_task = doc.get("task")
    if file_task is not None and file_task not in TASKS:
        issues.add("", "task", f"expected one of {TASKS}, got {file_task!r}")
    if task is not None and task not in TASKS:
        issues.add("", "task", f"unknown task {task!r}")
    if task and file_task and task != file_task and file_task in TASKS:
        issues.add("", "task", f"config task {file_task!r} conflicts with requested {task!r}")
    chosen = task or file_task
    if chosen is None:
        issues.add("", "task", "missing")
    cfg = RunConfig(task=chosen or "")

    known = {"task", "model", "grid", "phase_diagram", "dilation", "tolerances", "output", "run"}
    for key, value in doc.items():
        if key not in known:
            issues.add("", key, f"unknown key (allowed: {', '.join(sorted(known))})")
        elif key != "task" and not isinstance(value, dict):
            issues.add("", key, "expected a table")
    table = lambda name: doc.get(name) if isinstance(doc.get(name), dict) else {}  # noqa: E731

    _parse_model(table("model"), issues, cfg)
    _take(table("grid"), "grid", GRID_SPEC, issues, cfg.grid)
    _take(table("tolerances"), "tolerances", TOL_SPEC, issues, cfg.tolerances)
    _parse_dilation(table("dilation"), issues, cfg)
    out = table("output")
    for key, value in out.items():
        if key != "dir":
            issues.add("output", key, "unknown key (allowed: dir)")
        elif not isinstance(value, str) or not value:
            issues.add("output", "dir", f"expected a non-empty string, got {value!r}")
        else:
            cfg.out_dir = value
    holder = dataclasses.replace(cfg)
    _take(table("run"), "run", RUN_SPEC, issues, holder)
    cfg.workers, cfg.seed = holder.workers, holder.seed

    g = cfg.grid
    if g.t_max <= g.t_min and chosen in ("quench", "dtop"):
        issues.add("grid", "t_max", f"empty time range [{g.t_min}, {g.t_max}]")
    if chosen == "phase-diagram":
        _parse_axes(table("phase_diagram"), issues, cfg)
    elif "phase_diagram" in doc:
        _parse_axes(table("phase_diagram"), issues, cfg)

    if not issues.items:
        try:
            FAMILIES[cfg.family](**cfg.params)
        except (ValueError, TypeError) as exc:
            issues.add("model", "family", str(exc))
    if issues.items:
        raise ConfigError(issues.items)
    return cfg
