"""Command line interface: ``fracevol <subcommand> [--config FILE] [--out DIR]``.

Configuration is an INI file.  Every key is validated before any
computation; an unknown section or key, or a malformed value, exits with
status 2 and writes nothing.  The only environment override is
``FRACEVOL_OUTPUT_DIR`` for the output directory.

Exit codes: 0 ok, 2 config, 3 precondition failed, 4 non-contraction,
5 blow-up, 6 accuracy ceiling.

Each run writes ``report.json`` (status, results, resolved config),
``summary.txt`` and the subcommand's CSV files:

  specfun-table     wright.csv        alpha, z, wright_phi, density_interpolant
                    mittag_leffler.csv alpha, beta, z, value
  solve-linear      solution.csv      t, l2_norm, u_0 .. u_{N-1}
  solve-semilinear  solution.csv      as above, plus weighted_norm
                    iterations.csv    iteration, distance, ratio
  oracle-solve      solution.csv      t, l2_norm, u_0 .. u_{N-1}
  compare           compare.csv       t, representation_l2, oracle_l2, difference_l2
  check-ultra       slopes.csv        kind, p, q, slope, expected, rel_error, r2, constant, n_points
                    decay.csv         kind, p, q, gap, norm
  check-at          at_samples.csv    kind, t, tau_or_lambda, value
  check-global      solution.csv      t, l2_norm, weighted_norm
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, FracEvolError, NonContractionError, PreconditionError, WindowTooLongError
from .generator import PRESETS, build_family, check_at_conditions, lp_norm
from .mild import (FracParams, b_for_q, global_smallness_check, linear_nonlinearity,
                   local_params, picard_semilinear, power_nonlinearity, solve_linear, solve_windows,
                   weighted_norms, zero_nonlinearity)
from .oracle import l1_solve
from .specfun import mittag_leffler, wright_density, wright_moment, wright_phi
from .subordination import SubordinationQuadrature
from .ultra import decay_window, measure_semigroup_lambda, sup_constants, verify_P_decay, verify_S_decay
from .volterra import TimeGrid, build_operators, default_grading

log = logging.getLogger("fracevol")

SUBCOMMANDS = ("specfun-table", "solve-linear", "solve-semilinear", "oracle-solve", "compare",
               "check-ultra", "check-at", "check-global")

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_NONCONTRACTION, EXIT_BLOWUP, EXIT_CEILING = 0, 2, 3, 4, 5, 6


def _float(s: str) -> float:
    return float(s)


def _posfloat(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _posint(s: str) -> int:
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _opt(parse):
    def f(s: str):
        return None if s.strip().lower() in ("", "auto", "none") else parse(s)
    return f


def _floatlist(s: str) -> tuple:
    return tuple(float(x) for x in s.replace(";", ",").split(",") if x.strip())


def _pairs(s: str) -> tuple:
    out = []
    for chunk in s.split(";"):
        if chunk.strip():
            p, q = (float(x) for x in chunk.split(","))
            out.append((p, q))
    if not out:
        raise ValueError("need at least one p,q pair")
    return tuple(out)


def _choice(*opts):
    def f(s: str):
        s = s.strip()
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s
    return f


# section -> key -> (parser, default)
SCHEMA = {
    "problem": {
        "preset": (_choice(*sorted(PRESETS), "scalar"), "laplace-1d"),
        "n": (_posint, "15"),
        "T": (_posfloat, "1.0"),
        "K": (_posint, "32"),
        "grading_r": (_opt(_posfloat), "auto"),
        "lam": (_float, "1.0"),
        "eps": (_float, "0.0"),
    },
    "frac": {
        "alpha": (_posfloat, "0.5"),
        "p": (_posfloat, "2.0"),
        "b": (_opt(_posfloat), "auto"),
        "q": (_opt(_posfloat), "auto"),
        "kappa": (_opt(_posfloat), "auto"),
        "lambda_A": (_opt(_posfloat), "auto"),
    },
    "nonlinearity": {
        "kind": (_choice("power", "zero", "linear"), "power"),
        "p_power": (_opt(_posfloat), "auto"),
        "scale": (_float, "1.0"),
    },
    "forcing": {
        "kind": (_choice("zero", "constant"), "zero"),
        "value": (_float, "0.0"),
    },
    "initial": {
        "kind": (_choice("sine", "gaussian", "constant"), "sine"),
        "amplitude": (_float, "1.0"),
    },
    "tolerances": {
        "volterra_tol": (_posfloat, "1e-8"),
        "picard_tol": (_posfloat, "1e-8"),
        "max_iter": (_posint, "200"),
        "quad_nodes": (_posint, "64"),
    },
    "ultra": {
        "pairs": (_pairs, "1,2; 2,inf; 1,inf"),
        "window_lo": (_opt(_posfloat), "auto"),
        "window_hi": (_opt(_posfloat), "auto"),
    },
    "global": {
        "windows": (_posint, "4"),
        "window_length": (_opt(_posfloat), "auto"),
        "K_window": (_posint, "16"),
        "ceiling": (_posfloat, "1e6"),
    },
    "specfun": {
        "alphas": (_floatlist, "0.3, 0.5, 0.7"),
        "z_max": (_posfloat, "5.0"),
        "z_points": (_posint, "21"),
    },
    "output": {
        "dir": (str, "fracevol-out"),
    },
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)      # section -> key -> parsed value
    raw: dict = field(default_factory=dict)         # section -> key -> string
    source: str | None = None
    cli_out: str | None = None

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def out_dir(self) -> Path:
        """``--out`` first, then ``FRACEVOL_OUTPUT_DIR``, then ``[output] dir``."""
        return Path(self.cli_out or os.environ.get("FRACEVOL_OUTPUT_DIR") or self.values["output"]["dir"])


def _line_of(text: str, section: str, key: str | None) -> int | None:
    cur = None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return no
            continue
        if key is not None and cur == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return no
    return None


def load_config(path: str | None = None, text: str | None = None) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` naming the line and key."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    src = ""
    if path is not None:
        try:
            src = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    elif text is not None:
        src = text
    try:
        cp.read_string(src)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    raw = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"line {_line_of(src, sec, None)}: unknown section [{sec}]")
        for key, val in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"line {_line_of(src, sec, key)}: unknown key '{key}' in [{sec}]")
            raw[sec][key] = val
    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (parse, _) in keys.items():
            try:
                values[sec][key] = parse(raw[sec][key])
            except (ValueError, TypeError) as exc:
                line = _line_of(src, sec, key)
                where = f"line {line}: " if line else ""
                raise ConfigError(f"{where}[{sec}] {key} = {raw[sec][key]!r}: {exc}") from exc
    a = values["frac"]["alpha"]
    if not 0 < a < 1:
        raise ConfigError(f"line {_line_of(src, 'frac', 'alpha')}: [frac] alpha must lie in (0, 1)")
    if not values["frac"]["p"] > 1:
        raise ConfigError(f"line {_line_of(src, 'frac', 'p')}: [frac] p must exceed 1")
    if values["problem"]["preset"] == "scalar" and values["frac"]["lambda_A"] is None:
        values["frac"]["lambda_A"] = 1.0
    return RunConfig(values, raw, path)


# ---------------------------------------------------------------- helpers

def _family(cfg: RunConfig, T: float | None = None):
    pr = cfg["problem"]
    return build_family(pr["preset"], pr["n"], pr["T"] if T is None else T, lam=pr["lam"], eps=pr["eps"])


def _grid(cfg: RunConfig, T: float | None = None, K: int | None = None) -> TimeGrid:
    pr = cfg["problem"]
    r = pr["grading_r"] or default_grading(cfg["frac"]["alpha"])
    return TimeGrid(pr["T"] if T is None else T, pr["K"] if K is None else K, r)


def _quad(cfg: RunConfig) -> SubordinationQuadrature:
    return SubordinationQuadrature(cfg["frac"]["alpha"], cfg["tolerances"]["quad_nodes"])


def _initial(cfg: RunConfig, family) -> np.ndarray:
    ini = cfg["initial"]
    X = family.grid.points.reshape(family.size, -1)
    if ini["kind"] == "sine":
        u = np.prod(np.sin(np.pi * X), axis=1)
    elif ini["kind"] == "gaussian":
        u = np.exp(-np.sum((X - 0.5) ** 2, axis=1) / 0.02)
    else:
        u = np.ones(family.size)
    return ini["amplitude"] * u


def _forcing(cfg: RunConfig, family):
    fc = cfg["forcing"]
    if fc["kind"] == "zero":
        return None
    v = np.full(family.size, fc["value"])
    return lambda t: v


def _nonlinearity(cfg: RunConfig):
    nl = cfg["nonlinearity"]
    p = nl["p_power"] or cfg["frac"]["p"]
    if nl["kind"] == "power":
        return power_nonlinearity(p, nl["scale"])
    if nl["kind"] == "linear":
        return linear_nonlinearity(nl["scale"], p)
    return zero_nonlinearity(p)


def _lambda_A(cfg: RunConfig, family) -> float:
    lam = cfg["frac"]["lambda_A"]
    return measure_semigroup_lambda(family) if lam is None else lam


def _params(cfg: RunConfig, family, ops, u0, lam: float) -> FracParams:
    fr = cfg["frac"]
    alpha, p = fr["alpha"], fr["p"]
    b = fr["b"]
    if b is None and fr["q"] is not None:
        b = b_for_q(alpha, lam, p, fr["q"])
    params = FracParams.build(alpha, lam, p, b=b, kappa=1.0)
    if fr["kappa"] is not None:
        params.kappa = fr["kappa"]
    else:
        lin = np.einsum("kab,b->ka", ops.S[:, 0], u0)
        sup = float(np.max(weighted_norms(lin, ops.nodes, family.grid, p, params.b)))
        params.kappa = 2.0 * sup if sup > 0 else 1.0
    return params


def _r(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_r(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _solution_rows(nodes, values, grid, extra=None):
    for k, t in enumerate(nodes):
        row = [float(t), lp_norm(values[k], grid, 2)]
        if extra is not None:
            row.append(float(extra[k]))
        yield row + [float(v) for v in values[k]]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


# ------------------------------------------------------------ subcommands

def cmd_specfun_table(cfg: RunConfig, out: Path) -> dict:
    sf = cfg["specfun"]
    zs = np.linspace(0.0, sf["z_max"], sf["z_points"])
    rows, ml_rows, checks = [], [], {}
    for a in sf["alphas"]:
        dens = wright_density(a)
        for z in zs:
            rows.append([a, float(z), wright_phi(a, float(z)), float(dens(z))])
        checks[str(a)] = {"mass": wright_moment(a, 0.0),
                          "moment_1": wright_moment(a, 1.0),
                          "moment_1_exact": math.gamma(2.0) / math.gamma(1.0 + a)}
        for beta in (1.0, a):
            for z in np.linspace(-10.0, 2.0, 13):
                ml_rows.append([a, beta, float(z), mittag_leffler(a, beta, float(z))])
    _write_csv(out / "wright.csv", ["alpha", "z", "wright_phi", "density_interpolant"], rows)
    _write_csv(out / "mittag_leffler.csv", ["alpha", "beta", "z", "value"], ml_rows)
    return {"status": "ok", "checks": checks}


def _closed_form_discrepancy(family, alpha, u0, nodes, values, quad):
    sp = family.spectral(0.0)
    c = sp.Vinv @ u0
    keep = np.abs(c) > 1e-13 * max(np.abs(c).max(), 1e-300)
    worst, ref_max, fallback = 0.0, 0.0, 0
    for k, t in enumerate(nodes):
        e = np.zeros_like(c)
        for i in np.nonzero(keep)[0]:
            z = sp.mu[i] * t ** alpha
            if -z <= 50:
                e[i] = mittag_leffler(alpha, 1.0, z)
            else:
                e[i] = float(quad.phi_values(sp.mu[i], t))
                fallback += 1
        ref = sp.V @ (e * c)
        worst = max(worst, float(np.max(np.abs(ref - values[k]))))
        ref_max = max(ref_max, float(np.max(np.abs(ref))))
    return worst, ref_max, fallback


def cmd_solve_linear(cfg: RunConfig, out: Path) -> dict:
    fam = _family(cfg)
    tg, quad = _grid(cfg), _quad(cfg)
    u0 = _initial(cfg, fam)
    Q, R, ops = build_operators(fam, tg, quad, cfg["tolerances"]["volterra_tol"])
    sol = solve_linear(fam, ops, _forcing(cfg, fam), u0, tg)
    _write_csv(out / "solution.csv", ["t", "l2_norm"] + [f"u_{i}" for i in range(fam.size)],
               _solution_rows(sol.nodes, sol.values, fam.grid))
    res = {"status": "converged", "volterra_iterations": Q.iterations, "volterra_residual": Q.residual}
    if fam.autonomous and cfg["forcing"]["kind"] == "zero":
        worst, ref_max, fb = _closed_form_discrepancy(fam, cfg["frac"]["alpha"], u0, sol.nodes, sol.values, quad)
        res.update(closed_form_max_discrepancy=worst, closed_form_max=ref_max, closed_form_quadrature_modes=fb)
    return res


def _picard(cfg: RunConfig, fam, tg, quad, u0):
    tol = cfg["tolerances"]
    _, _, ops = build_operators(fam, tg, quad, tol["volterra_tol"])
    lam = _lambda_A(cfg, fam)
    params = _params(cfg, fam, ops, u0, lam)
    sol = picard_semilinear(fam, ops, _nonlinearity(cfg), u0, params, tg, tol["picard_tol"], tol["max_iter"])
    return sol, params, ops


def cmd_solve_semilinear(cfg: RunConfig, out: Path) -> dict:
    fam = _family(cfg)
    tg, quad = _grid(cfg), _quad(cfg)
    u0 = _initial(cfg, fam)
    sol, params, _ = _picard(cfg, fam, tg, quad, u0)
    _write_csv(out / "solution.csv", ["t", "l2_norm", "weighted_norm"] + [f"u_{i}" for i in range(fam.size)],
               _solution_rows(sol.nodes, sol.values, fam.grid, sol.weighted_trace))
    _write_csv(out / "iterations.csv", ["iteration", "distance", "ratio"],
               ([i + 1, d, (sol.ratios[i - 1] if i > 0 else float("nan"))] for i, d in enumerate(sol.distances)))
    return {"status": sol.status, "iterations": sol.iterations, "ratios": sol.ratios,
            "weighted_sup": sol.weighted_sup, "kappa": params.kappa, "residual": sol.residual,
            "params": asdict(params), "weighted_trace": sol.weighted_trace, "note": sol.message}


def cmd_oracle_solve(cfg: RunConfig, out: Path) -> dict:
    fam = _family(cfg)
    tg = _grid(cfg)
    u0 = _initial(cfg, fam)
    spec = None if cfg["nonlinearity"]["kind"] == "zero" else _nonlinearity(cfg)
    sol = l1_solve(fam, spec, u0, tg, f=_forcing(cfg, fam), alpha=cfg["frac"]["alpha"])
    _write_csv(out / "solution.csv", ["t", "l2_norm"] + [f"u_{i}" for i in range(fam.size)],
               _solution_rows(sol.nodes, sol.values, fam.grid))
    return {"status": sol.status, "method": sol.method}


def cmd_compare(cfg: RunConfig, out: Path) -> dict:
    fam = _family(cfg)
    tg, quad = _grid(cfg), _quad(cfg)
    u0 = _initial(cfg, fam)
    f = _forcing(cfg, fam)
    if cfg["nonlinearity"]["kind"] == "zero":
        _, _, ops = build_operators(fam, tg, quad, cfg["tolerances"]["volterra_tol"])
        rep = solve_linear(fam, ops, f, u0, tg)
        spec = None
    else:
        if f is not None:
            raise ConfigError("compare with a nonlinearity supports zero forcing only")
        rep, _, _ = _picard(cfg, fam, tg, quad, u0)
        spec = _nonlinearity(cfg)
    orc = l1_solve(fam, spec, u0, tg, f=f, alpha=cfg["frac"]["alpha"])
    g = fam.grid
    diffs = [lp_norm(rep.values[k] - orc.values[k], g, 2) for k in range(len(tg.nodes))]
    scale = max(lp_norm(v, g, 2) for v in rep.values)
    _write_csv(out / "compare.csv", ["t", "representation_l2", "oracle_l2", "difference_l2"],
               ([float(t), lp_norm(rep.values[k], g, 2), lp_norm(orc.values[k], g, 2), diffs[k]]
                for k, t in enumerate(tg.nodes)))
    return {"status": rep.status, "max_discrepancy": max(diffs),
            "relative_discrepancy": max(diffs) / scale if scale > 0 else 0.0}


def cmd_check_ultra(cfg: RunConfig, out: Path) -> dict:
    alpha = cfg["frac"]["alpha"]
    fam0 = _family(cfg)
    lam = _lambda_A(cfg, fam0)
    lo, hi = decay_window(fam0, alpha)
    u = cfg["ultra"]
    lo = u["window_lo"] or lo
    hi = u["window_hi"] or hi
    T = min(cfg["problem"]["T"], hi) if u["window_hi"] is None else cfg["problem"]["T"]
    fam = _family(cfg, T)
    tg = _grid(cfg, T)
    _, _, ops = build_operators(fam, tg, _quad(cfg), cfg["tolerances"]["volterra_tol"])
    rs = verify_S_decay(fam, ops, u["pairs"], (lo, hi), lam)
    rp = verify_P_decay(fam, ops, u["pairs"], (lo, hi), lam)
    rows, decay = [], []
    for kind, fits in (("S", rs.fits), ("P", rp.fits_P)):
        for (p, q), fit in fits.items():
            rows.append([kind, p, q, fit.slope, fit.expected, fit.rel_error, fit.r2, fit.constant, fit.n_points])
            decay += [[kind, p, q, float(gp), float(nm)] for gp, nm in zip(fit.gaps, fit.norms)]
    _write_csv(out / "slopes.csv", ["kind", "p", "q", "slope", "expected", "rel_error", "r2", "constant",
                                    "n_points"], rows)
    _write_csv(out / "decay.csv", ["kind", "p", "q", "gap", "norm"], decay)
    return {"status": "ok", "measured_lambda_A": lam, "fit_window": [lo, hi], "T": T,
            "slopes_S": {f"{p},{q}": v for (p, q), v in rs.slopes.items()},
            "slopes_P": {f"{p},{q}": v for (p, q), v in rp.slopes_P.items()},
            "skipped": rs.skipped + rp.skipped, "low_r2": rs.low_r2 + rp.low_r2}


def cmd_check_at(cfg: RunConfig, out: Path) -> dict:
    fam = _family(cfg)
    T = cfg["problem"]["T"]
    # Holder pairs anchored at T/2 with geometrically shrinking offsets
    probes = [0.5 * T] + [0.5 * T * (1.0 + 2.0 ** -k) for k in range(1, 8)]
    rep = check_at_conditions(fam, probes)
    rows = []
    for smp in rep.samples:
        if smp[0] == "resolvent":
            rows.append(["resolvent", float(smp[1]), float(np.real(smp[4])), float(smp[5])])
        else:
            rows.append(["holder", float(smp[1]), float(smp[2]), float(smp[5])])
    _write_csv(out / "at_samples.csv", ["kind", "t", "tau_or_lambda", "value"], rows)
    return {"status": "ok", "M_est": rep.M_est, "L_est": rep.L_est, "theta_fit": rep.theta_fit}


def cmd_check_global(cfg: RunConfig, out: Path) -> dict:
    gl = cfg["global"]
    alpha = cfg["frac"]["alpha"]
    length = gl["window_length"] or cfg["problem"]["T"] / gl["windows"]
    fam = _family(cfg, max(cfg["problem"]["T"], length * gl["windows"]))
    quad = _quad(cfg)
    u0 = _initial(cfg, fam)
    tg = _grid(cfg, length, gl["K_window"])
    _, _, ops = build_operators(fam, tg, quad, cfg["tolerances"]["volterra_tol"])
    lam = _lambda_A(cfg, fam)
    params = _params(cfg, fam, ops, u0, lam)
    spec = _nonlinearity(cfg)
    C_S, C_P = sup_constants(fam, ops, params.q_global, 2 * params.p, params.b, params.a)
    small = global_smallness_check(u0, fam.grid, params, C_S, C_P, spec.envelope_const)
    sol = solve_windows(fam, spec, u0, params, length, gl["windows"], gl["K_window"], quad,
                        cfg["tolerances"]["picard_tol"], gl["ceiling"], tg.r)
    trace = weighted_norms(sol.values, sol.nodes, fam.grid, params.p, params.b)
    _write_csv(out / "solution.csv", ["t", "l2_norm", "weighted_norm"],
               ([float(t), lp_norm(sol.values[k], fam.grid, 2), float(trace[k])] for k, t in enumerate(sol.nodes)))
    return {"status": sol.status, "smallness": asdict(small), "params": asdict(params), "alpha": alpha,
            "windows": sol.windows, "weighted_sup": float(trace.max()), "two_kappa": 2 * params.kappa,
            "local_params": local_params(alpha, lam, params.p)._asdict(), "note": sol.message}


COMMANDS = {
    "specfun-table": cmd_specfun_table,
    "solve-linear": cmd_solve_linear,
    "solve-semilinear": cmd_solve_semilinear,
    "oracle-solve": cmd_oracle_solve,
    "compare": cmd_compare,
    "check-ultra": cmd_check_ultra,
    "check-at": cmd_check_at,
    "check-global": cmd_check_global,
}

HELP = {
    "specfun-table": "tabulate the Wright and Mittag-Leffler functions",
    "solve-linear": "linear problem through the solution operators",
    "solve-semilinear": "semilinear problem by Picard iteration",
    "oracle-solve": "L1 time stepping, independent of the operator tables",
    "compare": "representation against the L1 oracle",
    "check-ultra": "fit the small-time smoothing exponents",
    "check-at": "sample the resolvent and Holder conditions on the generator",
    "check-global": "smallness check and windowed continuation",
}

STATUS_EXIT = {"converged": EXIT_OK, "ok": EXIT_OK, "blowup": EXIT_BLOWUP, "maxed": EXIT_NONCONTRACTION}


def _summary(cmd: str, result: dict) -> str:
    lines = [f"fracevol {__version__} {cmd}", f"status: {result.get('status')}"]
    for k, v in result.items():
        if k in ("status", "config", "weighted_trace"):
            continue
        if isinstance(v, (int, float, str)):
            lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


def run(cmd: str, cfg: RunConfig) -> int:
    """Execute one subcommand; returns the exit status."""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = COMMANDS[cmd](cfg, out)
        code = STATUS_EXIT.get(result.get("status"), EXIT_OK)
    except PreconditionError as exc:
        result, code = {"status": "precondition-failed", "error": str(exc), "measured": exc.measured}, EXIT_PRECONDITION
    except (NonContractionError, WindowTooLongError) as exc:
        result, code = {"status": "non-contraction", "error": str(exc)}, EXIT_NONCONTRACTION
    except FracEvolError as exc:
        result, code = {"status": "error", "error": str(exc), "kind": type(exc).__name__}, exc.exit_code
    result["command"] = cmd
    result["exit_code"] = code
    result["config"] = cfg.raw
    result["output_dir"] = str(out)
    with open(out / "report.json", "w") as fh:
        json.dump(_jsonable(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    (out / "summary.txt").write_text(_summary(cmd, result))
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracevol", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"fracevol {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", "-c", help="INI configuration file")
        p.add_argument("--out", "-o", help="output directory (overrides [output] dir)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.cli_out = args.out
    code = run(args.command, cfg)
    print((cfg.out_dir / "summary.txt").read_text(), end="")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
