"""Command-line front end.

Every command takes its parameters either as flags or from a JSON config
(``bclab run --config file.json``).  Configs carry ``"schema": 1`` and a
``"command"``; unknown keys are rejected.  Artifacts are written to
``--out`` (or the primary one to stdout) and embed a hash of the resolved
configuration.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import BoseCondensationError, ConfigurationError, ConvergenceError
from .geometry import Domain, ball, box, interval, polytope, sample_frames, classify_simplices, regular_sequence_check
from .io import config_hash, dumps, rows_to_csv
from .laplacian import BCSpec, Dirichlet, Grid, Neumann, Periodic, Robin, assemble, eigenvalues

SCHEMA = 1

# name -> (kind, default, help); kinds: str, int, float, floats, strs, bool, opt_float, opt_int
COMMON = {
    "out": ("opt_str", None, "output directory (default: primary artifact to stdout)"),
    "seed": ("int", 0, "random seed"),
    "workers": ("opt_int", None, "worker threads (BCLAB_WORKERS overrides)"),
    "no_timestamp": ("bool", False, "omit the timestamp from SVG output"),
}

GRID = {
    "domain": ("str", "interval:3.14159", "interval:L | box:a,b[,c] | ball:d,R | polytope:x,y;x,y;..."),
    "bc": ("str", "dirichlet", "dirichlet | dirichlet-node | neumann | periodic | robin:S | mixed | x-=..;default=.."),
    "cells": ("int", 64, "cells along the first axis"),
    "h": ("opt_float", None, "grid step (overrides --cells)"),
}

COMMANDS = {
    "spectrum": {**GRID, "count": ("int", 10, "number of eigenvalues")},
    "pressure": {**GRID, "beta": ("float", 1.0, "inverse temperature"),
                 "mu": ("floats", [0.0, -1.0], "chemical potentials mu_n,mu_k"),
                 "M": ("float", 10.0, "nuclear mass")},
    "freeenergy": {**GRID, "beta": ("float", 1.0, "inverse temperature"),
                   "n": ("int", 2, "electron number"), "z": ("str", "1", "nuclear charge p/q"),
                   "M": ("float", 10.0, "nuclear mass")},
    "groundstate": {**GRID, "mu": ("floats", [5.0, -1.0], "chemical potentials mu_n,mu_k"),
                    "M": ("float", 10.0, "nuclear mass")},
    "converge": {
        "domain": ("str", "interval:1", "base domain"),
        "scales": ("floats", [8.0, 16.0, 32.0, 64.0], "scale factors L"),
        "bcs": ("strs", ["dirichlet", "neumann", "robin:-1", "periodic"], "boundary conditions"),
        "quantity": ("str", "p", "p | g | f"),
        "beta": ("float", 1.0, "inverse temperature"),
        "mu": ("floats", [0.0, -1.0], "chemical potentials (p, g)"),
        "rho": ("float", 1.0, "electron density (f)"),
        "z": ("str", "1", "nuclear charge p/q"),
        "M": ("float", 10.0, "nuclear mass"),
        "resolution": ("str", "exact", "'exact' (intervals) or cells per unit length"),
        "terms": ("opt_int", None, "fit terms (2: c1/L, 3: adds c2/L^2)"),
    },
    "counterexample": {"ls": ("floats", [64.0, 80.0, 96.0, 128.0], "large-ball radii"),
                       "rho": ("float", 1.0, "electron density"), "z": ("str", "1", "nuclear charge"),
                       "M": ("float", 1.0, "nuclear mass")},
    "lieb-thirring": {"cases": ("int", 50, "random wells"), "dims": ("floats", [1.0, 2.0], "dimensions"),
                      "C_Lambda": ("float", 1.0, "chart metric constant")},
    "lieb-yau": {"cases": ("int", 10000, "random configurations"), "n_max": ("int", 6, "max electrons"),
                 "k_max": ("int", 6, "max nuclei"), "charges": ("strs", ["1/2", "1", "2"], "nuclear charges")},
    "robin-check": {"sigmas": ("floats", [-0.5, -1.0, -2.0], "elasticities"),
                    "count": ("int", 20, "eigenvalue indices"), "dim": ("int", 1, "1 or 2"),
                    "length": ("float", 1.0, "side length"),
                    "cells": ("floats", [64.0, 256.0], "cells per side (1D) or the coarse pair base (2D)")},
    "geometry": {"domain": ("str", "box:1,1", "domain"), "eta": ("float", 0.1, "mollifier width"),
                 "l": ("float", 0.25, "simplex scale"), "samples": ("int", 2000, "PoU sample points"),
                 "scales": ("floats", [1.0, 2.0, 4.0, 8.0], "regular-sequence scales"),
                 "collar": ("float", 0.1, "collar width")},
    "constants": {"z": ("str", "1", "nuclear charge"), "C_M": ("float", 0.5, "electron-count constant"),
                  "lam": ("float", 1.0, "packing constant"), "C_LT": ("opt_float", None, "LT constant (default configured 3D value)"),
                  "C_Lambda": ("float", 1.0, "chart metric constant"), "beta": ("float", 1.0, "inverse temperature"),
                  "mu": ("floats", [-1.0e4, -1.0e4], "chemical potentials"), "v": ("float", 1.0, "simplex volume bound"),
                  "M": ("float", 1.0, "nuclear mass"), "reflections": ("int", 1, "reflections")},
}

ANCHORS = {
    "spectrum": ["discrete Laplacian with boundary conditions"],
    "pressure": ["grand-canonical pressure, ideal gas"],
    "freeenergy": ["canonical free energy density, ideal gas, neutral"],
    "groundstate": ["grand ground-state energy, ideal gas"],
    "converge": ["boundary-condition independence of thermodynamic limits (ideal-gas surrogate)"],
    "counterexample": ["shrinking-ball example: divergent upper bound"],
    "lieb-thirring": ["Lieb-Thirring ratio, Dirichlet and reflected mixed regions"],
    "lieb-yau": ["Lieb-Yau one-body lower bound for the Coulomb energy"],
    "robin-check": ["Robin-to-Neumann form bound"],
    "geometry": ["partition of unity", "simplex classification", "regular sequences"],
    "constants": ["boundary energy constant C_E", "boundary partition constant C_Xi"],
}


class UsageError(ConfigurationError):
    pass


# -- parsing -----------------------------------------------------------------


def _floats(s: str) -> list:
    return [float(t) for t in s.split(",") if t.strip()]


def parse_domain(spec: str) -> Domain:
    try:
        kind, _, rest = spec.partition(":")
        kind = kind.strip().lower()
        if kind == "interval":
            return interval(float(rest))
        if kind == "box":
            return box(_floats(rest))
        if kind == "ball":
            v = _floats(rest)
            return ball(3, v[0]) if len(v) == 1 else ball(int(v[0]), v[1])
        if kind == "polytope":
            return polytope([_floats(p) for p in rest.split(";")])
    except (ValueError, IndexError) as exc:
        raise UsageError(f"bad domain {spec!r}: {exc}") from None
    raise UsageError(f"unknown domain kind in {spec!r}")


def _one_bc(s: str):
    s = s.strip().lower()
    if s == "dirichlet":
        return Dirichlet()
    if s == "dirichlet-node":
        return Dirichlet("node")
    if s == "neumann":
        return Neumann()
    if s == "periodic":
        return Periodic()
    if s.startswith("robin:"):
        try:
            return Robin(float(s[6:]))
        except ValueError:
            pass
    raise UsageError(f"bad boundary condition {s!r}")


def parse_bc(spec: str, d: int) -> BCSpec:
    s = spec.strip().lower()
    if s == "periodic":
        return BCSpec.periodic(d)
    if s == "mixed":
        return BCSpec({"x-": Neumann()}, Dirichlet())
    if "=" not in s:
        return BCSpec.uniform(_one_bc(s))
    pieces, default = {}, Dirichlet()
    for part in s.split(";"):
        tag, _, val = part.partition("=")
        if tag.strip() == "default":
            default = _one_bc(val)
        else:
            pieces[tag.strip()] = _one_bc(val)
    return BCSpec(pieces, default)


def _coerce(name, kind, value):
    try:
        if value is None:
            if kind.startswith("opt_"):
                return None
            raise UsageError(f"{name} is required")
        if kind in ("str", "opt_str"):
            if not isinstance(value, str):
                raise UsageError(f"{name} must be a string")
            return value
        if kind in ("int", "opt_int"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise UsageError(f"{name} must be an integer")
            return int(value)
        if kind in ("float", "opt_float"):
            x = float(value)
            if not math.isfinite(x):
                raise UsageError(f"{name} must be finite")
            return x
        if kind == "bool":
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if kind == "floats":
            xs = _floats(value) if isinstance(value, str) else [float(v) for v in value]
            if not all(math.isfinite(x) for x in xs):
                raise UsageError(f"{name} must be finite")
            return xs
        if kind == "strs":
            return [t.strip() for t in value.split(",")] if isinstance(value, str) else [str(v) for v in value]
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {name}: {value!r}") from None
    raise UsageError(f"unknown parameter kind {kind}")


def resolve(command: str, raw: dict) -> dict:
    """Validate ``raw`` against the schema of ``command`` and fill defaults."""
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    schema = {**COMMANDS[command], **COMMON}
    unknown = sorted(set(raw) - set(schema) - {"schema", "command"})
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    if "schema" in raw and raw["schema"] != SCHEMA:
        raise UsageError(f"unsupported schema version {raw['schema']!r} (expected {SCHEMA})")
    out = {"schema": SCHEMA, "command": command}
    for name, (kind, default, _) in schema.items():
        out[name] = _coerce(name, kind, raw.get(name, default))
    return out


def _hash_payload(cfg: dict) -> dict:
    # output location and presentation flags do not change results
    return {k: v for k, v in cfg.items() if k not in ("out", "no_timestamp", "workers")}


# -- commands ----------------------------------------------------------------


def _grid(cfg) -> tuple[Grid, BCSpec, Domain]:
    dom = parse_domain(cfg["domain"])
    lo, hi = dom.bounding_box()
    if cfg["h"] is not None:
        h = cfg["h"]
    else:
        if cfg["cells"] < 1:
            raise UsageError("cells must be positive")
        h = float(hi[0] - lo[0]) / cfg["cells"]
    if dom.kind in ("interval", "box"):
        n = np.round((hi - lo) / h)
        if np.allclose(n * h, hi - lo, rtol=1e-9):
            grid = Grid(h, np.ones(tuple(n.astype(int)), bool), lo)
        else:
            grid = Grid.from_domain(dom, h)
    else:
        grid = Grid.from_domain(dom, h)
    return grid, parse_bc(cfg["bc"], dom.dim), dom


def _with_hash(csv_text: str, h: str) -> str:
    lines = csv_text.rstrip("\n").split("\n")
    lines[0] += ",config_hash"
    return "\n".join([lines[0]] + [ln + "," + h for ln in lines[1:]]) + "\n"


def _spectrum(cfg, h):
    grid, bc, _ = _grid(cfg)
    spec = eigenvalues(assemble(grid, bc), min(cfg["count"], grid.size))
    meta = {"grid": grid.to_dict(), "bc": bc.to_dict(), "count": len(spec),
            "max_residual": float(np.max(spec.residuals)), "metadata": spec.metadata}
    return {"spectrum.csv": _with_hash(spec.to_csv(), h)}, meta, "spectrum.csv"


def _all_eigs(grid, bc):
    return eigenvalues(assemble(grid, bc), grid.size).values


def _species(cfg):
    from .statmech import electrons, nuclei

    grid, bc, dom = _grid(cfg)
    eigs = _all_eigs(grid, bc)
    vol = grid.size * grid.cell_volume
    prov = {"grid": grid.to_dict(), "bc": bc.to_dict()}
    return electrons(eigs, prov), nuclei(eigs, cfg["M"], prov), vol


def _pressure(cfg, h):
    from .statmech import grand_pressure

    e, nuc, vol = _species(cfg)
    r = grand_pressure(e, nuc, cfg["beta"], cfg["mu"], vol, e.provenance)
    return {"pressure.json": None}, r.to_dict(), "pressure.json"


def _freeenergy(cfg, h):
    from .statmech import free_energy_density

    e, nuc, vol = _species(cfg)
    r = free_energy_density(e, nuc, cfg["n"], Fraction(cfg["z"]), 1.0 * cfg["beta"], vol, e.provenance)
    return {"freeenergy.json": None}, r.to_dict(), "freeenergy.json"


def _groundstate(cfg, h):
    from .statmech import ground_state_grand

    e, nuc, vol = _species(cfg)
    r = ground_state_grand(e, nuc, cfg["mu"], vol, e.provenance)
    return {"groundstate.json": None}, r.to_dict(), "groundstate.json"


def _converge(cfg, h):
    from .harness import SweepSpec, free_energy_sweep, ground_state_sweep, pressure_sweep

    res = cfg["resolution"]
    if res != "exact":
        try:
            res = float(res)
        except ValueError:
            raise UsageError("resolution must be 'exact' or a number") from None
    q = cfg["quantity"]
    spec = SweepSpec(parse_domain(cfg["domain"]), cfg["scales"], cfg["bcs"], cfg["beta"],
                     mu=tuple(cfg["mu"]), rho=cfg["rho"], z=Fraction(cfg["z"]), M=cfg["M"],
                     resolution=res, workers=cfg["workers"])
    run = {"p": (pressure_sweep, 2), "g": (ground_state_sweep, 3), "f": (free_energy_sweep, 3)}
    if q not in run:
        raise UsageError("quantity must be p, g or f")
    fn, terms = run[q]
    table = fn(spec, terms=cfg["terms"] or terms)
    for r in table.rows:
        r["config_hash"] = h
    meta = table.to_dict()
    meta["agreement_3se"] = table.agreement()
    if "neumann" in cfg["bcs"] and "dirichlet" in cfg["bcs"]:
        meta["neumann_dirichlet_difference"] = table.difference()
    ts = None if cfg["no_timestamp"] else _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    csv_text = rows_to_csv(table.rows, ["kind", "bc", "L", "volume", "value", "flagged",
                                        "truncation_bound", "modes", "config_hash"])
    return {"table.csv": csv_text, "table.json": None, "plot.svg": table.to_svg(ts)}, meta, "table.csv"


def _counterexample(cfg, h):
    from .harness import counterexample_run

    r = counterexample_run(cfg["ls"], cfg["rho"], Fraction(cfg["z"]), cfg["M"])
    for row in r["rows"]:
        row["config_hash"] = h
    csv_text = rows_to_csv(r["rows"], ["l", "volume", "term1", "term2", "total", "config_hash"])
    return {"counterexample.csv": csv_text, "counterexample.json": None}, r, "counterexample.csv"


def _lieb_thirring(cfg, h):
    from .lieb_thirring import lt_audit

    r = lt_audit(cfg["cases"], cfg["seed"], [int(d) for d in cfg["dims"]], C_Lambda=cfg["C_Lambda"])
    rows = [{k: v for k, v in row.items() if k not in ("well", "dirichlet_raw", "mixed_raw")} | {"config_hash": h}
            for row in r["rows"]]
    csv_text = rows_to_csv(rows, ["case", "d", "side", "reflections", "dirichlet_ratio", "constant",
                                  "mixed_ratio", "mixed_constant", "ok", "config_hash"])
    return {"lieb_thirring.csv": csv_text, "lieb_thirring.json": None}, r, "lieb_thirring.json"


def _lieb_yau(cfg, h):
    from .coulomb import lieb_yau_audit

    charges = tuple(Fraction(c) for c in cfg["charges"])
    r = lieb_yau_audit(cfg["cases"], cfg["seed"], cfg["n_max"], cfg["k_max"], charges)
    return {"lieb_yau.json": None}, r, "lieb_yau.json"


def _robin_check(cfg, h):
    from .robin import (build_inward_field, robin_lower_bound_params, verify_robin_bound,
                        verify_robin_bound_1d, verify_robin_bound_extrapolated)

    d, ell = cfg["dim"], cfg["length"]
    rows, summary = [], []
    dom = interval(ell) if d == 1 else box([ell] * d)
    field = build_inward_field(dom)
    for s in cfg["sigmas"]:
        p = robin_lower_bound_params(s, field)
        cases = []
        if d == 1:
            cases.append(("analytic", verify_robin_bound_1d(ell, s, p, cfg["count"])))
            for n in cfg["cells"]:
                g = Grid.box([0.0], [ell], ell / int(n))
                cases.append((f"h={ell / int(n):g}", verify_robin_bound(g, BCSpec.uniform(Robin(s)), p, cfg["count"])))
        elif d == 2:
            n = int(cfg["cells"][0])
            bc = BCSpec({"x-": Robin(s), "x+": Dirichlet()}, Neumann())
            grids = [Grid.box([0.0] * 2, [ell] * 2, ell / n), Grid.box([0.0] * 2, [ell] * 2, ell / (2 * n))]
            cases.append(("extrapolated", verify_robin_bound_extrapolated(grids, bc, p, cfg["count"])))
        else:
            raise UsageError("dim must be 1 or 2")
        for name, res in cases:
            for r in res["rows"]:
                rows.append({"sigma": s, "case": name, **r, "config_hash": h})
            summary.append({"sigma": s, "case": name, "tau": p.tau, "C": p.C, "worst_margin": res["worst_margin"]})
    meta = {"cases": summary, "violations": sum(1 for r in rows if r["margin"] < 0)}
    csv_text = rows_to_csv(rows, ["sigma", "case", "k", "lambda_sigma", "bound", "margin", "config_hash"])
    return {"robin_margins.csv": csv_text, "robin.json": None}, meta, "robin_margins.csv"


def _geometry(cfg, h):
    from .pou import PartitionOfUnity

    dom = parse_domain(cfg["domain"])
    d = dom.dim
    rng = np.random.default_rng(cfg["seed"])
    out = {"domain": dom.to_dict()}
    if d in (2, 3):
        pou = PartitionOfUnity(d, cfg["eta"])
        x = rng.uniform(-2, 2, (cfg["samples"], d))
        s = pou.sum_squares(x)
        out["partition_of_unity"] = {"max_error": float(np.max(np.abs(s - 1))), "samples": cfg["samples"],
                                     "tolerance": pou.quadrature_tolerance}
        frame = sample_frames(d, 1, cfg["seed"])[0]
        c = classify_simplices(dom, frame, cfg["l"], cfg["eta"])
        out["classification"] = {"interior": len(c.interior), "boundary": len(c.boundary),
                                 "exterior": c.exterior_count, "interior_fraction": c.interior_fraction,
                                 "boundary_fraction": c.boundary_fraction}
    out["regular_sequence"] = regular_sequence_check([dom.scaled(L) for L in cfg["scales"]], cfg["collar"])
    return {"geometry.json": None}, out, "geometry.json"


def _constants(cfg, h):
    from .coulomb import BoundConstants, boundary_energy_constant, boundary_partition_constant
    from .lieb_thirring import lt_constant

    C_LT = cfg["C_LT"] if cfg["C_LT"] is not None else lt_constant(3)
    c = BoundConstants(Fraction(cfg["z"]), cfg["C_M"], cfg["lam"], C_LT, cfg["C_Lambda"])
    E = boundary_energy_constant(tuple(cfg["mu"]), cfg["v"], c)
    X = boundary_partition_constant(cfg["beta"], tuple(cfg["mu"]), cfg["v"], c, cfg["M"], cfg["reflections"])
    out = {"inputs": c.to_dict(), "C_LT_source": "given" if cfg["C_LT"] is not None else "configured 3D constant",
           "C_E": E, "C_Xi": X}
    return {"constants.json": None}, out, "constants.json"


HANDLERS = {
    "spectrum": _spectrum, "pressure": _pressure, "freeenergy": _freeenergy, "groundstate": _groundstate,
    "converge": _converge, "counterexample": _counterexample, "lieb-thirring": _lieb_thirring,
    "lieb-yau": _lieb_yau, "robin-check": _robin_check, "geometry": _geometry, "constants": _constants,
}


def execute(cfg: dict, stdout=None) -> int:
    """Run a resolved config; write artifacts.  Returns the exit code."""
    stdout = stdout or sys.stdout
    if cfg["workers"] is not None:
        os.environ.setdefault("BCLAB_WORKERS", str(cfg["workers"]))
    h = config_hash(_hash_payload(cfg))
    artifacts, meta, primary = HANDLERS[cfg["command"]](cfg, h)
    doc = {"config": {k: v for k, v in cfg.items() if k != "out"}, "config_hash": h, "anchors": ANCHORS[cfg["command"]], "version": __version__,
           "result": meta}
    for name in artifacts:
        if artifacts[name] is None:
            artifacts[name] = dumps(doc)
    meta_name = "meta.json"
    if meta_name not in artifacts and not any(n.endswith(".json") for n in artifacts):
        artifacts[meta_name] = dumps(doc)
    if cfg["out"]:
        os.makedirs(cfg["out"], exist_ok=True)
        for name in sorted(artifacts):
            with open(os.path.join(cfg["out"], name), "w", encoding="utf-8", newline="\n") as f:
                f.write(artifacts[name])
        stdout.write(dumps({"config_hash": h, "artifacts": sorted(artifacts), "out": cfg["out"]}))
    else:
        stdout.write(artifacts[primary])
    return 0


# -- argument parsing ----------------------------------------------------------


def _add_flags(p: argparse.ArgumentParser, schema: dict):
    for name, (kind, default, help_) in schema.items():
        flag = "--" + name.replace("_", "-")
        if kind == "bool":
            p.add_argument(flag, dest=name, action="store_true", default=None, help=help_)
        else:
            p.add_argument(flag, dest=name, default=None, help=f"{help_} (default: {default})")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bclab", description="Boundary-condition experiments for Coulomb and ideal quantum gases.")
    p.add_argument("--version", action="version", version=f"bclab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for cmd, schema in COMMANDS.items():
        _add_flags(sub.add_parser(cmd, help=ANCHORS[cmd][0]), {**schema, **COMMON})
    r = sub.add_parser("run", help="run a JSON config")
    r.add_argument("--config", required=True)
    _add_flags(r, {k: v for k, v in COMMON.items()})
    return p


def _diagnose(kind: str, message: str, stderr) -> None:
    stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")


def main(argv=None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("no command given")
        raw = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
        if args.command == "run":
            path = args.config
            if not os.path.exists(path):
                raise UsageError(f"config not found: {path}")
            try:
                with open(path, encoding="utf-8") as f:
                    file_cfg = json.load(f)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config is not valid JSON: {exc}") from None
            if not isinstance(file_cfg, dict) or "command" not in file_cfg:
                raise UsageError("config must be an object with a 'command'")
            cmd = file_cfg["command"]
            raw = {**file_cfg, **raw}
        else:
            cmd = args.command
        cfg = resolve(cmd, raw)
        return execute(cfg, stdout)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except ConfigurationError as exc:
        _diagnose("config", str(exc), stderr)
        return 2
    except (ConvergenceError, BoseCondensationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        _diagnose("numerical", str(exc), stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


def main_entry() -> None:
    sys.exit(main())
