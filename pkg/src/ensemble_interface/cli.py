"""Command-line scenario runner.

``ensemble-interface run <scenario> [--config FILE] [--seed N] [--out PATH]
[--format csv|json] [--sweep NAME START:STOP:STEP] [--<param> VALUE ...]``

``ensemble-interface run acceptance`` executes the acceptance checks.

Configuration files are flat ``key = value`` text (``#`` starts a comment).
Reserved keys are ``scenario``, ``seed``, ``sweep``, ``format``, ``out`` and
``schema_version``; every other key must be a parameter of the scenario.
Output files carry the resolved configuration as ``#@ key = value`` header
lines (CSV) or a ``config`` object (JSON); either can be fed back through
``--config`` to reproduce the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Callable

import numpy as np

SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def fmt(x: Any) -> str:
    """Render a value for output; floats get 9 significant digits."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def conv(text):
        t = str(text).strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t

    return conv


def _gain(text):
    t = str(text).strip()
    return t if t == "optimal" else float(t)


def _backaction(text):
    t = str(text).strip()
    return t if t in ("closed_form", "literal") else float(t)


# --- scenarios -------------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    params: dict[str, tuple[Callable, Any]]
    run: Callable[[dict, int | None], dict]
    sampling: Callable[[dict], bool] = lambda p: False
    help: str = ""


def _squeeze(p, seed):
    from .protocols import spin_squeeze, squeezing_variance_closed_form

    r = spin_squeeze(p["kappa"], p["eta_A"], p["epsilon"], p["gain"], p["mc_samples"], seed)
    out = dict(r.figures)
    out["variance"] = out["var_PA_conditional"]
    out["variance_closed_form"] = squeezing_variance_closed_form(p["kappa"], p["eta_A"], p["epsilon"])
    return out


def _entangle(p, seed):
    from .protocols import entangle_ensembles

    return entangle_ensembles(p["kappa"], p["scheme"], p["eta_A"], p["epsilon"]).figures


def _memory(p, seed):
    from .protocols import memory_store

    n_bar = p["n_bar"] if p["n_bar"] > 0 else None
    r = memory_store(
        p["kappa"], p["gain"], eta_A=p["eta_A"], epsilon=p["epsilon"], atom_squeeze=p["atom_squeeze"],
        n_bar=n_bar, mc_samples=p["mc_samples"], seed=seed,
    )
    return r.figures


def _teleport(p, seed):
    from . import interface_maps as im
    from .protocols import InputClass, teleport

    w = {"closed_form": im.BACKACTION_CLOSED_FORM, "literal": im.BACKACTION_LITERAL}.get(p["backaction"], p["backaction"])
    cls = InputClass("coherent", p["n_bar"]) if p["n_bar"] > 0 else None
    r = teleport(p["kappa"], p["gain"], input_class=cls, backaction_weight=w, seed=seed if p["sample_bell"] else None)
    return r.figures


def _eit(p, seed):
    from . import maxwell_bloch as mb
    from .interface_maps import EnsembleParams

    d, T = p["d"], p["T"]
    nz = p["nz"] or int(8 * d)
    if p["mode"] == "delay":
        ep = EnsembleParams(d=d, gamma=p["gamma"], rabi=p["rabi"])
        sig = p["sigma"] * math.sqrt(d)
        t0 = 4 * sig
        T = t0 + d * p["gamma"] / p["rabi"] ** 2 + 6.5 * sig
        nt = p["nt"] or max(int(8 * d), int(4 * T) + 1)
        delay, expected = mb.group_delay(ep, lambda t: np.exp(-((t - t0) ** 2) / (2 * sig**2)) + 0j, T, nz, nt)
        return {"delay": delay, "expected_delay": expected, "relative_error": delay / expected - 1.0, "window": T}
    ep = EnsembleParams(d=d, gamma=p["gamma"], rabi=math.sqrt(p["control_ratio"] * d * p["gamma"] / T))
    nt = p["nt"] or int(8 * max(d, p["control_ratio"] * d / 2))
    shapes, effs = mb.iterate_optimal_input(ep, p["n_iter"], T, nz, nt, tol=p["tol"] or None)
    res = mb.eit_transfer(ep, shapes[-1], T, nz, nt)
    return {
        "round_trip_efficiency": effs[-1],
        "storage_efficiency": res.storage_efficiency,
        "leakage": res.leakage,
        "iterations": len(effs),
        "first_efficiency": effs[0],
    }


def _dlcz(p, seed):
    from . import fock_sim as fs

    w = fs.dlcz_write(p["kappa"], p["cutoff"])
    prob, rho = fs.herald_entangle(w, w, p["port"], p["dark_rate"], p["efficiency"])
    return {
        "herald_probability": prob,
        "concurrence": fs.concurrence(rho),
        "discarded_weight": rho.discarded_weight,
        "g2_heralded": fs.g2_conditional(w, "L", "A"),
        "g2_unconditioned": fs.g2_conditional(w, None, "A"),
        "mean_photons": w.mean_number("L"),
        "_density": json.loads(rho.to_json()),
    }


def _polarizability(p, seed):
    from . import atomic_structure as ats

    if p["preset"] == "cs_d2_f4":
        spec = ats.CESIUM_D2_F4
    else:
        offsets = {}
        for item in filter(None, (s.strip() for s in p["offsets_mhz"].split(","))):
            fp, val = item.split(":")
            offsets[float(fp)] = float(val) * ats.TWO_PI_MHZ
        spec = ats.LevelSpec(F=p["F"], I=p["I"], J=p["J"], Jp=p["Jp"], delta_Fprime=offsets)
    c = ats.polarizability_coeffs(spec, p["delta_mhz"] * ats.TWO_PI_MHZ)
    a = ats.asymptotic_coeffs(spec)
    return {"a0": c.a0, "a1": c.a1, "a2": c.a2, "a0_asymptote": a.a0, "a1_asymptote": a.a1, "a2_asymptote": a.a2}


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario(
            "squeeze",
            {"kappa": (float, 1.0), "eta_A": (float, 0.0), "epsilon": (float, 0.0), "gain": (_gain, "optimal"), "mc_samples": (int, 0)},
            _squeeze,
            lambda p: p["mc_samples"] > 0,
            "QND measurement plus feedback spin squeezing",
        ),
        Scenario(
            "entangle",
            {"kappa": (float, 1.0), "scheme": (_choice("two-pulse", "magnetic"), "two-pulse"), "eta_A": (float, 0.0), "epsilon": (float, 0.0)},
            _entangle,
            help="deterministic two-ensemble entanglement",
        ),
        Scenario(
            "memory",
            {
                "kappa": (float, 1.0), "gain": (float, 1.0), "eta_A": (float, 0.0), "epsilon": (float, 0.0),
                "atom_squeeze": (float, 1.0), "n_bar": (float, 0.0), "mc_samples": (int, 0),
            },
            _memory,
            lambda p: p["mc_samples"] > 0,
            "QND plus feedback light-to-atoms memory",
        ),
        Scenario(
            "teleport",
            {"kappa": (float, 1.48), "gain": (float, 1.0), "n_bar": (float, 0.0), "backaction": (_backaction, "closed_form"), "sample_bell": (_bool, False)},
            _teleport,
            lambda p: p["sample_bell"],
            "light-to-atoms teleportation",
        ),
        Scenario(
            "eit",
            {
                "mode": (_choice("optimize", "delay"), "optimize"), "d": (float, 30.0), "gamma": (float, 1.0), "T": (float, 10.0),
                "control_ratio": (float, 2.0), "n_iter": (int, 10), "tol": (float, 0.0), "rabi": (float, 1.0), "sigma": (float, 3.0),
                "nz": (int, 0), "nt": (int, 0),
            },
            _eit,
            help="EIT storage: optimised input iteration or slow-light delay",
        ),
        Scenario(
            "dlcz",
            {
                "kappa": (float, 0.05), "cutoff": (int, 4), "efficiency": (float, 1.0), "dark_rate": (float, 0.0),
                "port": (_choice("+", "-"), "+"),
            },
            _dlcz,
            help="write pulses, heralded entanglement and g2",
        ),
        Scenario(
            "polarizability",
            {
                "preset": (_choice("cs_d2_f4", "custom"), "cs_d2_f4"), "delta_mhz": (float, -1000.0), "F": (float, 4.0), "I": (float, 3.5),
                "J": (float, 0.5), "Jp": (float, 1.5), "offsets_mhz": (str, ""),
            },
            _polarizability,
            help="scalar, vector and tensor polarizability coefficients",
        ),
    )
}

RESERVED = ("scenario", "seed", "sweep", "format", "out", "schema_version", "jobs")


# --- configuration ----------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    scenario: str
    params: dict
    sweep: tuple[str, list] | None = None
    seed: int | None = None
    out: str | None = None
    fmt: str = "csv"
    jobs: int = 1
    raw: dict = field(default_factory=dict)

    def recorded(self) -> list[tuple[str, str]]:
        items = [("schema_version", str(SCHEMA_VERSION)), ("scenario", self.scenario)]
        if self.seed is not None:
            items.append(("seed", str(self.seed)))
        if self.sweep is not None:
            items.append(("sweep", self.raw["sweep"]))
        items += [(k, fmt(v)) for k, v in sorted(self.params.items())]
        return items


def parse_config_text(text: str, source: str = "<config>") -> dict[str, tuple[str, str]]:
    """Parse ``key = value`` lines into ``{key: (value, location)}``.

    A JSON document (as written by ``--format json``) is also accepted, in
    which case its ``config`` object is used. In files whose first line is a
    ``#@`` record, only the ``#@`` lines are read.
    """
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON: {exc}") from None
        cfg = doc.get("config", doc)
        if not isinstance(cfg, dict):
            raise ConfigError(f"{source}: 'config' must be an object")
        return {str(k): (str(v), f"{source}:{k}") for k, v in cfg.items()}
    lines = text.splitlines()
    recorded = bool(lines) and lines[0].startswith("#@")
    out = {}
    for no, line in enumerate(lines, 1):
        if recorded:
            if not line.startswith("#@"):
                continue
            line = line[2:]
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{no}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r}")
        out[key] = (val, f"{source}:{no}")
    return out


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    parts = spec.split()
    if len(parts) != 2:
        raise ConfigError(f"sweep must be 'NAME START:STOP:STEP', got {spec!r}")
    name, grid = parts
    try:
        if ":" in grid:
            a, b, step = (Decimal(x) for x in grid.split(":"))
            if step <= 0 or b < a:
                raise ConfigError(f"sweep grid {grid!r} needs STEP > 0 and STOP >= START")
            n = int((b - a) / step + Decimal("1e-9")) + 1
            values = [float(a + k * step) for k in range(n)]
        else:
            values = [float(x) for x in grid.split(",") if x]
    except (ArithmeticError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse sweep grid {grid!r}: {exc}") from None
    if not values:
        raise ConfigError("sweep grid is empty")
    return name, values


def build_config(scenario: str | None, entries: dict[str, tuple[str, str]]) -> ScenarioConfig:
    entries = dict(entries)
    if "scenario" in entries:
        from_file, loc = entries.pop("scenario")
        if scenario is None:
            scenario = from_file
        elif from_file != scenario:
            raise ConfigError(f"{loc}: config is for scenario {from_file!r}, not {scenario!r}")
    if scenario is None:
        raise ConfigError("no scenario given")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(sorted(SCENARIOS))} or 'acceptance'")
    sc = SCENARIOS[scenario]
    if "schema_version" in entries:
        v, loc = entries.pop("schema_version")
        if v.strip() != str(SCHEMA_VERSION):
            raise ConfigError(f"{loc}: unsupported schema_version {v!r} (this build reads {SCHEMA_VERSION})")
    raw = {}
    seed = None
    if "seed" in entries:
        v, loc = entries.pop("seed")
        try:
            seed = int(v)
        except ValueError:
            raise ConfigError(f"{loc}: seed must be an integer, got {v!r}") from None
    out_path = entries.pop("out", (None, ""))[0]
    fmt_name = entries.pop("format", ("csv", ""))[0]
    if fmt_name not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt_name!r}")
    jobs_text, loc = entries.pop("jobs", ("1", ""))
    try:
        jobs = int(jobs_text)
    except ValueError:
        raise ConfigError(f"{loc}: jobs must be an integer") from None
    sweep = None
    if "sweep" in entries:
        v, loc = entries.pop("sweep")
        try:
            sweep = parse_sweep(v)
        except ConfigError as exc:
            raise ConfigError(f"{loc}: {exc}") from None
        raw["sweep"] = v
        if sweep[0] not in sc.params:
            raise ConfigError(f"{loc}: cannot sweep unknown parameter {sweep[0]!r} of scenario {scenario!r}")
    params = {}
    for key, (conv, default) in sc.params.items():
        params[key] = default
    for key, (val, loc) in entries.items():
        if key not in sc.params:
            raise ConfigError(f"{loc}: unknown key {key!r} for scenario {scenario!r}; allowed: {', '.join(sorted(sc.params))}")
        try:
            params[key] = sc.params[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"{loc}: bad value for {key!r}: {exc}") from None
    cfg = ScenarioConfig(scenario, params, sweep, seed, out_path, fmt_name, jobs, raw)
    points = [params] if sweep is None else [{**params, sweep[0]: sc.params[sweep[0]][0](v)} for v in sweep[1]]
    if seed is None and any(sc.sampling(pt) for pt in points):
        raise ConfigError(f"scenario {scenario!r} samples random outcomes with these parameters: a seed is required")
    return cfg


# --- execution ---------------------------------------------------------------------------

def run_scenario(cfg: ScenarioConfig) -> list[dict]:
    """Evaluate every sweep point; rows come back sorted by the sweep value."""
    sc = SCENARIOS[cfg.scenario]
    if cfg.sweep is None:
        points = [dict(cfg.params)]
    else:
        name, values = cfg.sweep
        conv = sc.params[name][0]
        points = [{**cfg.params, name: conv(v)} for v in sorted(values)]

    def one(pt):
        figs = sc.run(pt, cfg.seed)
        # a figure named like an input parameter (e.g. the resolved gain) gets a suffix
        return {**pt, **{(f"{k}_value" if k in pt else k): v for k, v in figs.items()}}

    if cfg.jobs > 1 and len(points) > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            rows = list(pool.map(one, points))
    else:
        rows = [one(pt) for pt in points]
    return rows


def _columns(cfg: ScenarioConfig, rows: list[dict]) -> list[str]:
    params = sorted(cfg.params)
    figs = sorted({k for r in rows for k in r if k not in cfg.params and not k.startswith("_")})
    return params + figs


def render(cfg: ScenarioConfig, rows: list[dict]) -> str:
    cols = _columns(cfg, rows)
    if cfg.fmt == "json":
        doc = {
            "config": dict(cfg.recorded()),
            "columns": cols,
            "rows": [{c: fmt(r.get(c, "")) for c in cols} for r in rows],
        }
        extras = [{k[1:]: v for k, v in r.items() if k.startswith("_")} for r in rows]
        if any(extras):
            doc["artifacts"] = extras
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    for k, v in cfg.recorded():
        buf.write(f"#@ {k} = {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def run_acceptance(stream=sys.stdout) -> int:
    from .acceptance import run_all

    results = run_all(lambda line: print(line, file=stream, flush=True))
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} acceptance checks passed", file=stream)
    return EXIT_OK if n_fail == 0 else EXIT_ACCEPTANCE


def _parse_overrides(extra: list[str]) -> dict[str, tuple[str, str]]:
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"option {tok} needs a value")
            val = extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = (val, f"--{key}")
    return out


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ensemble-interface", description="Light/atomic-ensemble interface scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser(
        "run",
        help="run a scenario or the acceptance checks",
        description="Scenarios: " + "; ".join(f"{n}: {s.help}" for n, s in SCENARIOS.items()) + "; acceptance: all acceptance checks.",
    )
    run.add_argument("scenario_pos", nargs="?", metavar="scenario")
    run.add_argument("--scenario", dest="scenario_opt")
    run.add_argument("--config")
    run.add_argument("--seed")
    run.add_argument("--out")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--sweep", nargs=2, metavar=("NAME", "GRID"), help="sweep NAME over START:STOP:STEP or a comma list")
    run.add_argument("--jobs", type=int)
    sub.add_parser("list", help="list scenarios and their parameters")
    return ap


def _split_sweep(argv: list[str]) -> tuple[list[str], list[str] | None]:
    # pulled out by hand so that grids with negative numbers are not read as options
    argv = list(argv)
    for i, tok in enumerate(argv):
        if tok == "--sweep":
            if len(argv) - i < 3:
                raise ConfigError("--sweep needs NAME and GRID")
            return argv[:i] + argv[i + 3 :], argv[i + 1 : i + 3]
    return argv, None


def _split_overrides(argv: list[str]) -> list[str]:
    # "--key value" becomes "--key=value" so that neither a negative number is
    # read as an option nor a value is taken for the optional scenario positional
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if tok.startswith("--") and "=" not in tok and nxt is not None and (not nxt.startswith("-") or _is_number(nxt)):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def main(argv: list[str] | None = None) -> int:
    ap = make_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        argv, sweep = _split_sweep(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args, extra = ap.parse_known_args(_split_overrides(argv))
    if sweep is not None:
        args.sweep = sweep
    if args.command == "list":
        for name, sc in SCENARIOS.items():
            print(f"{name}: {sc.help}")
            for k, (_, default) in sc.params.items():
                print(f"    {k} = {fmt(default)}")
        return EXIT_OK
    scenario = args.scenario_opt or args.scenario_pos
    if scenario == "acceptance":
        return run_acceptance()
    try:
        entries: dict[str, tuple[str, str]] = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    entries.update(parse_config_text(fh.read(), args.config))
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        cli = _parse_overrides(extra)
        for key, attr in (("seed", "seed"), ("out", "out"), ("format", "format"), ("jobs", "jobs")):
            if getattr(args, attr) is not None:
                cli[key] = (str(getattr(args, attr)), f"--{key}")
        if args.sweep:
            cli["sweep"] = (" ".join(args.sweep), "--sweep")
        entries.update(cli)
        cfg = build_config(scenario, entries)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = run_scenario(cfg)
    except (ValueError, ArithmeticError) as exc:
        print(f"numerical precondition failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = render(cfg, rows)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
