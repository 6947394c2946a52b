"""Run configuration documents.

Line-oriented ``key = value`` text with optional ``[section]`` headers::

    # Collision channel, two nodes
    [run]
    mode = validate
    slots = 100000

    [scenario]
    N = 2
    lambda = 0.5
    D = 3
    n = 2
    c = 1

    [channel]
    table = explicit
    values = 0.75, 0.375

    [sweep]
    q = 0.1:0.9:0.1
    lambda = 0.25, 0.5, 0.75

Keys before the first header may belong to any of run/scenario/channel, and a
single line may hold several comma-separated assignments (``N=2, q=0.5``).
Keys are case sensitive (``N`` is the node count, ``n`` the retransmissions).
Sweep values are comma lists or ``start:stop:step`` ranges; axes are swept in
the order written.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional

from .channel import ChannelParams, SuccessTable, symmetric_success_table
from .service import Scenario

MODES = ("analyze", "simulate", "validate", "sweep", "sdp-table", "optimize")
OBJECTIVES = ("max-throughput", "min-drop-rate")
SWEEP_AXES = ("q", "lambda", "D", "n", "N", "c")
SCENARIO_KEYS = ("N", "q", "lambda", "D", "n", "c", "L", "b")
REQUIRED = ("N", "q", "lambda", "D", "n")
INT_KEYS = {"N", "D", "n", "c", "L", "b", "slots", "seed", "warmup", "reps"}

RUN_DEFAULTS = dict(mode="analyze", slots=100_000, seed=1, warmup=1_000, reps=1, grid=0.1,
                    objective="max-throughput", out=None)
CHANNEL_DEFAULTS = dict(table="physics", values=None, gamma_db=0.0, eta_dbm=-115.4, ptx=0.01,
                        v=1.0, r=100.0, alpha=4.5)
SECTIONS = {
    "run": tuple(RUN_DEFAULTS),
    "scenario": SCENARIO_KEYS,
    "channel": tuple(CHANNEL_DEFAULTS),
    "sweep": SWEEP_AXES,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunSpec:
    mode: str = "analyze"
    base: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)  # [(axis, [values...]), ...]
    table: str = "physics"
    table_values: Optional[tuple] = None
    channel: dict = field(default_factory=lambda: {k: v for k, v in CHANNEL_DEFAULTS.items()
                                                   if k not in ("table", "values")})
    out: Optional[str] = None
    seed: int = 1
    slots: int = 100_000
    warmup: int = 1_000
    reps: int = 1
    grid: float = 0.1
    objective: str = "max-throughput"

    def points(self) -> list:
        """Scenario parameter dicts for the Cartesian product of the sweep axes."""
        pts = [dict(self.base)]
        for axis, values in self.sweep:
            pts = [dict(p, **{axis: v}) for p in pts for v in values]
        return pts

    def success_table(self, n_nodes: int) -> SuccessTable:
        if self.table == "explicit":
            return SuccessTable.explicit(self.table_values)
        ch = self.channel
        params = ChannelParams.from_db(ch["gamma_db"], ch["eta_dbm"], ch["ptx"], ch["v"], ch["r"],
                                       ch["alpha"])
        return symmetric_success_table(params, n_nodes)


def scenario_from_point(point: dict) -> Scenario:
    return Scenario(n_nodes=point["N"], q=point.get("q", 0.5), lam=point["lambda"],
                    deadline=point["D"], retx=point["n"], mpr_cap=point.get("c", 1),
                    buffer=point.get("L"), backlogged=point.get("b"))


def _num(text: str, key: str, lineno: int):
    try:
        if key in INT_KEYS:
            return int(text)
        return float(text)
    except ValueError:
        kind = "an integer" if key in INT_KEYS else "a number"
        raise ConfigError(f"line {lineno}: {key} must be {kind}, got {text!r}") from None


def _range(text: str, key: str, lineno: int) -> list:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"line {lineno}: range for {key} must be start:stop:step")
    try:
        start, stop, step = (Decimal(p.strip()) for p in parts)
    except ArithmeticError:
        raise ConfigError(f"line {lineno}: bad range {text!r} for {key}") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"line {lineno}: range for {key} needs step > 0 and stop >= start")
    out = []
    x = start
    while x <= stop:
        out.append(_num(str(x), key, lineno))
        x += step
    return out


def _check_domain(key: str, value, lineno: int):
    bad = None
    if key in ("q", "lambda") and not 0.0 <= value <= 1.0:
        bad = "must lie in [0, 1]"
    elif key in ("N", "D", "c", "L", "b", "slots", "reps") and value < 1:
        bad = "must be >= 1"
    elif key in ("n", "warmup") and value < 0:
        bad = "must be >= 0"
    elif key == "seed" and not 0 <= value < 2 ** 64:
        bad = "must be an unsigned 64-bit integer"
    elif key == "grid" and not 0.0 < value <= 0.5:
        bad = "must lie in (0, 0.5]"
    if bad:
        raise ConfigError(f"line {lineno}: {key} = {value} {bad}")


def _assignments(line: str):
    # several assignments may share a line; value lists never contain '='
    if line.count("=") > 1:
        for part in line.split(","):
            part = part.strip()
            if part:
                yield part
    else:
        yield line


def parse_config(text: str) -> RunSpec:
    """Parse and validate a configuration document into a ``RunSpec``."""
    section = None
    seen: dict = {}  # (section, key) -> lineno
    run = dict(RUN_DEFAULTS)
    base: dict = {}
    channel = dict(CHANNEL_DEFAULTS)
    sweep: list = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = re.split(r"\s[#;]|^[#;]", raw, maxsplit=1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[\s*([\w-]+)\s*\]", line)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]; "
                                  f"expected one of {', '.join(SECTIONS)}")
            continue
        for item in _assignments(line):
            if "=" not in item:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {item!r}")
            key, value = (s.strip() for s in item.split("=", 1))
            sec = section
            if sec is None:
                sec = next((s for s in ("scenario", "run", "channel") if key in SECTIONS[s]), None)
                if sec is None:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
            elif key not in SECTIONS[sec]:
                raise ConfigError(f"line {lineno}: unknown key {key!r} in [{sec}]")
            if (sec, key) in seen:
                raise ConfigError(f"line {lineno}: duplicate key {key!r} "
                                  f"(first set on line {seen[sec, key]})")
            seen[sec, key] = lineno
            if not value:
                raise ConfigError(f"line {lineno}: empty value for {key!r}")

            if sec == "sweep":
                values = _range(value, key, lineno) if ":" in value else \
                    [_num(v.strip(), key, lineno) for v in value.split(",") if v.strip()]
                if not values:
                    raise ConfigError(f"line {lineno}: sweep axis {key} has no values")
                for v in values:
                    _check_domain(key, v, lineno)
                sweep.append((key, values))
            elif sec == "scenario":
                v = _num(value, key, lineno)
                _check_domain(key, v, lineno)
                base[key] = v
            elif sec == "run":
                if key == "mode":
                    if value not in MODES:
                        raise ConfigError(f"line {lineno}: mode must be one of {', '.join(MODES)}")
                    run[key] = value
                elif key == "objective":
                    if value not in OBJECTIVES:
                        raise ConfigError(f"line {lineno}: objective must be one of {', '.join(OBJECTIVES)}")
                    run[key] = value
                elif key == "out":
                    run[key] = value
                else:
                    v = _num(value, key, lineno)
                    _check_domain(key, v, lineno)
                    run[key] = v
            else:
                if key == "table":
                    if value not in ("physics", "explicit"):
                        raise ConfigError(f"line {lineno}: table must be 'physics' or 'explicit'")
                    channel[key] = value
                elif key == "values":
                    try:
                        channel[key] = SuccessTable.explicit(
                            [float(v) for v in value.split(",") if v.strip()]).p
                    except ValueError as e:
                        raise ConfigError(f"line {lineno}: {e}") from None
                else:
                    channel[key] = _num(value, key, lineno)

    def where(key, sec="scenario"):
        return seen.get((sec, key), 0)

    swept = {axis for axis, _ in sweep}
    missing = [k for k in REQUIRED if k not in base and k not in swept
               and not (k == "q" and run["mode"] == "optimize")]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)} "
                          f"(required: {', '.join(REQUIRED)})")
    if len(swept) != len(sweep):
        raise ConfigError("a sweep axis is listed twice")
    if run["mode"] == "optimize" and "q" in swept:
        raise ConfigError(f"line {seen['sweep', 'q']}: q cannot be swept in optimize mode")
    if run["warmup"] >= run["slots"]:
        raise ConfigError(f"line {where('warmup', 'run') or where('slots', 'run')}: "
                          f"warmup must be smaller than slots")
    if channel["table"] == "explicit" and channel["values"] is None:
        raise ConfigError(f"line {where('table', 'channel')}: table = explicit needs 'values'")
    if channel["table"] == "physics" and channel["values"] is not None:
        raise ConfigError(f"line {where('values', 'channel')}: 'values' requires table = explicit")
    if channel["table"] == "physics":
        try:
            ChannelParams.from_db(channel["gamma_db"], channel["eta_dbm"], channel["ptx"],
                                  channel["v"], channel["r"], channel["alpha"])
        except ValueError as e:
            first = min((ln for (sec, _), ln in seen.items() if sec == "channel"), default=0)
            raise ConfigError(f"line {first}: invalid channel parameters: {e}") from None

    # cross-key checks that only involve unswept keys are reported here; the rest per row
    def cross(key, ok, msg):
        deps = {"n": ("D",), "c": ("N",), "L": ("D",), "b": ("N",)}[key]
        if key in base and key not in swept and all(d in base and d not in swept for d in deps):
            if not ok():
                raise ConfigError(f"line {where(key)}: {msg}")

    cross("n", lambda: base["n"] <= base["D"] - 1, f"n = {base.get('n')} violates n <= D-1")
    cross("c", lambda: base["c"] <= base["N"], f"c = {base.get('c')} exceeds N")
    cross("L", lambda: base["L"] >= base["D"], f"L = {base.get('L')} is smaller than D")
    cross("b", lambda: base["b"] <= base["N"], f"b = {base.get('b')} exceeds N")
    if channel["table"] == "explicit" and "N" in base and "N" not in swept:
        need = min(base.get("c", 1), base.get("b", base["N"]))
        if len(channel["values"]) < need:
            raise ConfigError(f"line {where('values', 'channel')}: need at least {need} table values")

    return RunSpec(
        mode=run["mode"], base=base, sweep=sweep, table=channel["table"],
        table_values=channel["values"],
        channel={k: channel[k] for k in CHANNEL_DEFAULTS if k not in ("table", "values")},
        out=run["out"], seed=run["seed"], slots=run["slots"], warmup=run["warmup"],
        reps=run["reps"], grid=run["grid"], objective=run["objective"],
    )


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def render(spec: RunSpec) -> str:
    """Inverse of ``parse_config``: ``parse_config(render(s)) == s``."""
    lines = ["[run]", f"mode = {spec.mode}", f"slots = {spec.slots}", f"seed = {spec.seed}",
             f"warmup = {spec.warmup}", f"reps = {spec.reps}", f"grid = {_fmt(spec.grid)}",
             f"objective = {spec.objective}"]
    if spec.out is not None:
        lines.append(f"out = {spec.out}")
    lines += ["", "[scenario]"]
    lines += [f"{k} = {_fmt(spec.base[k])}" for k in SCENARIO_KEYS if k in spec.base]
    lines += ["", "[channel]", f"table = {spec.table}"]
    if spec.table_values is not None:
        lines.append("values = " + ", ".join(_fmt(v) for v in spec.table_values))
    lines += [f"{k} = {_fmt(v)}" for k, v in spec.channel.items()]
    if spec.sweep:
        lines += ["", "[sweep]"]
        lines += [f"{axis} = " + ", ".join(_fmt(v) for v in values) for axis, values in spec.sweep]
    return "\n".join(lines) + "\n"
