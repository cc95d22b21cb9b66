"""Command-line front end.

    cmshift run CONFIG [--out DIR]
    cmshift --list-builtins

Configs are TOML with ``version = 1``. Set ``CMSHIFT_THREADS`` to cap BLAS
threads. Exit codes: 1 config, 2 non-convergence, 3 resource cap,
4 precondition.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np
import tomli
from threadpoolctl import threadpool_limits

from . import __version__
from .builtins import builtin, list_builtins
from .errors import CMShiftError, ConfigError
from .forcing import Forcing, ForcingFamily
from .io import csv_text, manifest_text
from .lattice import real_span
from .key_renewal import DiscreteDistribution, key_asymptotics, solve_key_renewal
from .potential import (constant, from_weights, gauss_potential, letter_values,
                        load_potential_csv, power_potential)
from .renewal import (RenewalGrid, RenewalProblem, asymptote_lattice, asymptotic_constant_nonlattice,
                      check_conditions, laplace_probe, periodic_sums, renewal_fixed_point,
                      trivial_lattice, verify_lattice)
from .resolvent import PotentialFamily, pole_probe, pressure_curve, solve_delta
from .shift import parse_incidence
from .transfer import (classify_a_function, complex_spectrum, leading_eigendata,
                       pressure_by_limit)

TASKS = ("pressure", "eigendata", "spectrum", "classify", "delta", "residue", "renewal",
         "key-renewal", "lattice-check", "laplace-probe")

TOP_KEYS = {"version", "system", "task", "numeric", "output"}
SYSTEM_KEYS = {"builtin", "shift", "M", "k", "theta", "t_star", "u", "xi", "chi"}
POT_KEYS = {"kind", "values", "value", "s", "path", "depth"}
NUMERIC_KEYS = {"tol", "max_iter", "word_cap"}
OUTPUT_KEYS = {"dir", "prefix"}
FORCING_KEYS = {"kind", "beta", "lo", "hi", "grid", "values"}
TASK_KEYS = {
    "pressure": {"n_max"},
    "eigendata": {"gibbs_lmax"},
    "spectrum": {"a", "t"},
    "classify": {"a", "t", "tol"},
    "delta": {"bracket", "curve"},
    "residue": {"radius", "nodes"},
    "renewal": {"t_min", "t_max", "step", "lattice", "p_max", "forcing"},
    "key-renewal": {"p", "s", "t_min", "t_max", "step", "forcing"},
    "lattice-check": {"p_max"},
    "laplace-probe": {"z", "t_min", "t_max", "step", "rule", "forcing"},
}


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError("%s must be a table" % where)
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError("unknown key %r in %s" % (extra[0], where))


def load_config(path):
    try:
        with open(path, "rb") as fh:
            cfg = tomli.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read config: %s" % exc) from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("malformed config: %s" % exc) from exc
    validate(cfg)
    return cfg


def validate(cfg):
    _check_keys(cfg, TOP_KEYS, "config")
    if cfg.get("version") != 1:
        raise ConfigError("config needs version = 1")
    for key in ("system", "task"):
        if key not in cfg:
            raise ConfigError("missing [%s] block" % key)
    sysb = cfg["system"]
    _check_keys(sysb, SYSTEM_KEYS, "[system]")
    for key in ("u", "xi"):
        if key in sysb:
            _check_keys(sysb[key], POT_KEYS, "[system.%s]" % key)
    if "builtin" not in sysb and ("shift" not in sysb or "u" not in sysb):
        raise ConfigError("[system] needs builtin or shift + u")
    task = cfg["task"]
    if not isinstance(task, dict) or task.get("name") not in TASKS:
        raise ConfigError("[task] name must be one of %s" % ", ".join(TASKS))
    _check_keys(task, TASK_KEYS[task["name"]] | {"name"}, "[task]")
    if "forcing" in task:
        _check_keys(task["forcing"], FORCING_KEYS, "[task.forcing]")
    _check_keys(cfg.get("numeric", {}), NUMERIC_KEYS, "[numeric]")
    _check_keys(cfg.get("output", {}), OUTPUT_KEYS, "[output]")
    if task["name"] == "key-renewal":
        for key in ("p", "s", "forcing"):
            if key not in task:
                raise ConfigError("key-renewal task needs %r" % key)


# ----------------------------------------------------------------- building

def _potential(block, shift, theta, default_depth):
    kind = block.get("kind")
    try:
        if kind == "weights":
            return from_weights(shift, block["values"], theta=theta)
        if kind == "letters":
            return letter_values(shift, block["values"], theta=theta)
        if kind == "constant":
            return constant(shift, float(block.get("value", 0.0)), theta=theta)
        if kind == "power":
            return power_potential(shift, float(block["s"]), theta=theta)
        if kind == "gauss":
            return gauss_potential(shift, float(block.get("s", 1.0)),
                                   depth=int(block.get("depth", default_depth)))
        if kind == "csv":
            return load_potential_csv(block["path"], shift, theta=theta)
    except KeyError as exc:
        raise ConfigError("potential of kind %r needs %s" % (kind, exc)) from exc
    raise ConfigError("unknown potential kind %r" % kind)


def build_system(cfg):
    sysb = cfg["system"]
    theta = float(sysb.get("theta", 0.5))
    M = sysb.get("M")
    k = int(sysb.get("k", 2))
    if "builtin" in sysb:
        system = builtin(sysb["builtin"], M=M, depth=sysb.get("k"))
        shift = system.shift
        u, xi, chi, forcing = system.u, system.xi, system.chi, system.forcing
        lattice = system.lattice
    else:
        if M is None:
            raise ConfigError("[system] needs M")
        shift = parse_incidence(sysb["shift"], int(M))
        u = _potential(sysb["u"], shift, theta, k)
        xi, chi, forcing, lattice = None, None, None, None
    if "xi" in sysb:
        xi = _potential(sysb["xi"], shift, theta, k)
    if "chi" in sysb:
        chi = np.asarray(sysb["chi"], dtype=float)
    word_cap = cfg.get("numeric", {}).get("word_cap")
    if word_cap:
        shift.word_cap = int(word_cap)
    return dict(shift=shift, u=u, xi=xi, chi=chi, forcing=forcing, lattice=lattice,
                t_star=float(sysb.get("t_star", math.inf)))


def _forcing(block, default):
    if block is None:
        if default is None:
            raise ConfigError("task needs a [task.forcing] block")
        return default
    kind = block.get("kind")
    if kind == "step":
        f = Forcing.step()
    elif kind == "exp-step":
        f = Forcing.exp_step(float(block.get("beta", 0.0)))
    elif kind == "box":
        f = Forcing.box(float(block["lo"]), float(block["hi"]))
    elif kind == "tabulated":
        f = Forcing.tabulated(block["grid"], block["values"])
    else:
        raise ConfigError("unknown forcing kind %r" % kind)
    return ForcingFamily.uniform(f)


def _family(sysd):
    if sysd["xi"] is None:
        raise ConfigError("task needs [system.xi]")
    return PotentialFamily(sysd["u"], sysd["xi"], sysd["t_star"])


def _ledger_base(sysd, tol):
    led = []
    for label in ("u", "xi"):
        f = sysd.get(label)
        if f is None:
            continue
        led.append({"approximation": "depth projection of %s" % label, "bound": f.projection_error})
        if f.tail is None:
            led.append({"approximation": "alphabet tail of %s" % label, "bound": "not declared"})
        else:
            led.append({"approximation": "alphabet tail of %s" % label,
                        "bound": f.tail(sysd["shift"].M), "rule": f.tail.describe()})
    led.append({"approximation": "power iteration", "bound": tol})
    return led


def _grid(task, default_step):
    return RenewalGrid.span(float(task.get("t_min", -1.0)), float(task.get("t_max", 30.0)),
                            float(task.get("step", default_step)))


# ------------------------------------------------------------------- tasks

def execute(cfg):
    """Run one task; returns ``(files, manifest)`` with files as ``{name: text}``."""
    sysd = build_system(cfg)
    task = cfg["task"]
    name = task["name"]
    num = cfg.get("numeric", {})
    tol = float(num.get("tol", 1e-12))
    max_iter = int(num.get("max_iter", 100_000))
    ledger = _ledger_base(sysd, tol)
    results = {}
    files = {}
    states = None

    def word(row):
        return tuple(int(e) for e in row)

    if name == "pressure":
        spec = leading_eigendata(sysd["u"], tol=tol, max_iter=max_iter, gibbs_lmax=0)
        files["pressure.csv"] = csv_text(["pressure", "lambda"], [(spec.pressure, spec.lam)])
        results.update(pressure=spec.pressure, lam=spec.lam)
        if "n_max" in task:
            seq = pressure_by_limit(sysd["u"], int(task["n_max"]))
            files["pressure_limit.csv"] = csv_text(["n", "value"], list(zip(range(1, seq.size + 1), seq)))
            ledger.append({"approximation": "pressure limit at finite n", "bound": "O(1/n)"})
    elif name == "eigendata":
        lmax = task.get("gibbs_lmax")
        spec = leading_eigendata(sysd["u"], tol=tol, max_iter=max_iter,
                                 gibbs_lmax=None if lmax is None else int(lmax))
        states = spec.states
        files["eigendata.csv"] = csv_text(
            ["state", "h", "nu", "mu"],
            [(word(w), spec.h[i], spec.nu[i], spec.mu[i]) for i, w in enumerate(states)])
        results.update(lam=spec.lam, pressure=spec.pressure, gamma=spec.gamma,
                       gamma_empirical=spec.gamma_empirical, gamma_dense=spec.gamma_dense,
                       positivity_margin=spec.positivity_margin, gibbs_constant=spec.gibbs_constant,
                       gibbs_lmax=spec.gibbs_lmax, residual=spec.residual)
        ledger.append({"approximation": "Gibbs constant from finite cylinder scan",
                       "bound": "scan up to length %d" % spec.gibbs_lmax})
    elif name in ("spectrum", "classify"):
        f = sysd["u"] + 1j * float(task.get("a", 0.0))
        if float(task.get("t", 0.0)):
            if sysd["xi"] is None:
                raise ConfigError("t requires [system.xi]")
            f = f + sysd["xi"] * (1j * float(task["t"]))
        if name == "spectrum":
            sp = complex_spectrum(f)
            files["spectrum.csv"] = csv_text(["re", "im"], [(e.real, e.imag) for e in sp.eigenvalues])
            results.update(spectral_radius=sp.spectral_radius, reference_radius=sp.reference_radius,
                           margin=sp.margin)
        else:
            cl = classify_a_function(f, tol=float(task.get("tol", 1e-8)))
            files["classify.csv"] = csv_text(
                ["kind", "angle", "spectral_radius", "reference_radius"],
                [(cl.kind, cl.angle, cl.spectrum.spectral_radius, cl.spectrum.reference_radius)])
            results.update(kind=cl.kind, angle=cl.angle)
        ledger.append({"approximation": "finite truncation of the complex operator",
                       "bound": "essential spectrum not approximated"})
    elif name == "delta":
        fam = _family(sysd)
        sol = solve_delta(fam, bracket=tuple(task.get("bracket", (-1.0, 1.0))))
        files["delta.csv"] = csv_text(["delta", "derivative", "pressure_residual", "lo", "hi"],
                                      [(sol.delta, sol.derivative, sol.pressure_residual, *sol.bracket)])
        results.update(delta=sol.delta, derivative=sol.derivative)
        if "curve" in task:
            pc = pressure_curve(fam, task["curve"])
            files["pressure_curve.csv"] = csv_text(
                ["t", "pressure", "derivative", "finite_difference"],
                list(zip(pc.t, pc.pressure, pc.derivative, pc.finite_difference)))
    elif name == "residue":
        fam = _family(sysd)
        sol = solve_delta(fam)
        chi = 1.0 if sysd["chi"] is None else sysd["chi"]
        pp = pole_probe(fam, sol, chi, radius=task.get("radius"), nodes=int(task.get("nodes", 32)))
        states = sol.spec.states
        files["residue.csv"] = csv_text(
            ["state", "numeric_re", "numeric_im", "formula"],
            [(word(w), pp.residue[i].real, pp.residue[i].imag, pp.formula[i]) for i, w in enumerate(states)])
        results.update(delta=sol.delta, rel_error=pp.rel_error, first_moment=pp.first_moment,
                       radius=pp.radius, nodes=pp.nodes)
        ledger.append({"approximation": "trapezoid contour quadrature", "bound": pp.rel_error})
    elif name in ("renewal", "laplace-probe"):
        fam = _family(sysd)
        chi = 1.0 if sysd["chi"] is None else sysd["chi"]
        forcing = _forcing(task.get("forcing"), sysd["forcing"])
        sol = solve_delta(fam)
        lat_flag = task.get("lattice", "auto")
        lattice = None
        if lat_flag is True or (lat_flag == "auto" and sysd["lattice"]):
            lattice = trivial_lattice(fam.xi)
            rep = verify_lattice(fam.xi, lattice, p_max=int(task.get("p_max", 8)))
            results["lattice"] = dict(ok=rep.ok, a=lattice.a, coboundary_error=rep.coboundary_error)
            if not rep.ok:
                raise ConfigError("declared lattice structure failed verification")
        prob = RenewalProblem(fam, chi, forcing, sol=sol, lattice=lattice)
        step = lattice.a / 8 if lattice is not None else float(fam.xi.values[fam.xi.values > 0].min()) / 16
        grid = _grid(task, step)
        solution = renewal_fixed_point(prob, grid, max_iter=max_iter)
        states = prob.states
        results.update(delta=sol.delta, residual=solution.residual, method=solution.method)
        ledger.append({"approximation": "off-grid delay reads", "bound": solution.interpolation})
        ledger.append({"approximation": "left boundary (N = 0 below t_min)",
                       "bound": "no certificate" if solution.left_budget is None else solution.left_budget})
        if name == "renewal":
            if lattice is not None:
                asym = asymptote_lattice(prob, solution.t).tilted
            else:
                asym = np.tile(asymptotic_constant_nonlattice(prob).U, (grid.n, 1))
            cond = check_conditions(prob, grid)
            results["conditions"] = {c: getattr(cond, c).ok for c in "ABCD"}
            rows = []
            N = solution.N
            for i, t in enumerate(solution.t):
                for j, w in enumerate(states):
                    a = asym[i, j]
                    rows.append((t, word(w), N[i, j], solution.tilted[i, j], a,
                                 solution.tilted[i, j] / a if a else math.nan))
            files["renewal.csv"] = csv_text(["t", "state", "N", "tilted", "asymptote", "ratio"], rows)
        else:
            zs = [complex(z) if not isinstance(z, list) else complex(*z) for z in task.get("z", [-0.1])]
            rule = task.get("rule", "hold" if lattice is not None else "trapezoid")
            lp = laplace_probe(prob, solution, zs, rule=rule)
            rows = []
            for i, z in enumerate(lp.z):
                for j, w in enumerate(states):
                    rows.append((z.real, z.imag, word(w), lp.integral[i, j].real, lp.integral[i, j].imag,
                                 lp.operator[i, j].real, lp.operator[i, j].imag))
            files["laplace.csv"] = csv_text(
                ["z_re", "z_im", "state", "integral_re", "integral_im", "operator_re", "operator_im"], rows)
            results["extrapolated_zL"] = lp.extrapolated
            results["minus_U"] = -lp.U
            ledger.append({"approximation": "Laplace window tail", "bound": "extrapolated beyond t_max"})
    elif name == "key-renewal":
        dist = DiscreteDistribution(tuple(task["p"]), tuple(task["s"]))
        z = _forcing(task["forcing"], None).default
        ts = _grid(task, min(v for v in dist.s if v > 0) / 64).t
        ks = solve_key_renewal(dist, z, ts)
        ka = key_asymptotics(dist, ks, z)
        target = ka.limit_ii if ka.limit_ii is not None else np.full(ts.size, ka.limit_i)
        files["key_renewal.csv"] = csv_text(
            ["t", "Z", "asymptote", "ratio"],
            [(t, ks.Z[i], target[i], ks.Z[i] / target[i] if target[i] else math.nan)
             for i, t in enumerate(ts)])
        results.update(mean=ks.mean, residual=ks.residual, limit=ka.limit_i, tail_gap=ka.gap,
                       cesaro=ka.cesaro, lattice=ka.lattice, span=ka.span)
        ledger.append({"approximation": "renewal measure truncation",
                       "bound": "F^{*n} mass on window < 1e-14 (%d convolutions)" % ks.measure.convolutions})
    elif name == "lattice-check":
        if sysd["xi"] is None:
            raise ConfigError("lattice-check needs [system.xi]")
        xi = sysd["xi"]
        p_max = int(task.get("p_max", 8))
        span = real_span(periodic_sums(xi, p_max))
        ok, cob = False, math.nan
        if span.discrete:
            rep = verify_lattice(xi, trivial_lattice(xi), p_max=p_max)
            ok, cob = rep.ok, rep.coboundary_error
        files["lattice.csv"] = csv_text(["lattice", "span", "coboundary_error", "p_max"],
                                        [(ok, span.span, cob, p_max)])
        results.update(lattice=ok, span=span.span)
        ledger.append({"approximation": "periodic orbits checked", "bound": "period <= %d" % p_max})
    manifest = {
        "version": __version__,
        "config": cfg,
        "task": name,
        "tolerances": {"tol": tol, "max_iter": max_iter},
        "results": results,
        "truncation_ledger": ledger,
        "files": sorted(files),
    }
    return files, manifest


def write_outputs(files, manifest, out_dir, prefix=""):
    """Write every file under a temporary name first, then rename them all."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts = {prefix + k: v for k, v in files.items()}
    texts[prefix + "manifest.json"] = manifest_text(manifest)
    staged = []
    try:
        for fname, text in sorted(texts.items()):
            tmp = out / (".%s.partial" % fname)
            tmp.write_text(text)
            staged.append((tmp, out / fname))
    except OSError:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def run(config_path, out_dir=None):
    cfg = load_config(config_path)
    files, manifest = execute(cfg)
    outb = cfg.get("output", {})
    target = out_dir or outb.get("dir", ".")
    return write_outputs(files, manifest, target, outb.get("prefix", ""))


def main(argv=None):
    parser = argparse.ArgumentParser(prog="cmshift", description="Transfer operators and renewal theory on truncated Markov shifts.")
    parser.add_argument("--list-builtins", action="store_true", help="list builtin example systems")
    sub = parser.add_subparsers(dest="command")
    p_run = sub.add_parser("run", help="run the task described by a TOML config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides [output] dir)")
    sub.add_parser("list-builtins", help="list builtin example systems")
    args = parser.parse_args(argv)
    if args.list_builtins or args.command == "list-builtins":
        print("\n".join(list_builtins()))
        return 0
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return 1
    threads = os.environ.get("CMSHIFT_THREADS")
    try:
        limit = int(threads) if threads else None
    except ValueError:
        print("cmshift: error code=1 kind=ConfigError reason=CMSHIFT_THREADS must be an integer",
              file=sys.stderr)
        return 1
    try:
        with threadpool_limits(limits=limit):
            paths = run(args.config, args.out)
    except CMShiftError as exc:
        reason = " ".join(str(exc).split())
        print("cmshift: error code=%d kind=%s reason=%s" % (exc.exit_code, type(exc).__name__, reason),
              file=sys.stderr)
        return exc.exit_code
    for p in paths:
        print(p)
    return 0
