"""Command-line front end: ``ep-spectra <command> [options]``.

Every command writes a JSON report (and CSV tables for curves) into
``--out`` together with a ``manifest.json`` carrying the resolved
configuration, library versions and wall time.  Without ``--out`` the JSON
report goes to standard output.  Options can also come from a TOML file
(``--config``); explicit flags win over file values.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import epn_models as em
from . import epn_perturbation as ep
from . import ic_spectral as ic
from . import iep_basis as ib
from . import iep_perturbation as ipt
from .errors import EPSpectraError, NumericalFailure
from .reporting import SCHEMA_VERSION, csv_text, dumps, versions

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("ep_spectra")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
RUN_KEYS = ("out", "format", "config", "command", "verbose")


# ---------------------------------------------------------------- argument types


def float_list(text: str) -> list:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def int_list(text: str) -> list:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def linear_grid(text: str) -> np.ndarray:
    """``start:stop:count`` -> ``count`` evenly spaced points including both ends."""
    try:
        start, stop, count = str(text).split(":")
        grid = np.linspace(float(start), float(stop), int(count))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}") from exc
    if grid.size < 1:
        raise argparse.ArgumentTypeError("grid needs at least one point")
    return grid


def geometric_grid(text: str) -> np.ndarray:
    """``start:stop:count`` -> geometrically spaced points including both ends."""
    try:
        start, stop, count = str(text).split(":")
        grid = np.geomspace(float(start), float(stop), int(count))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}") from exc
    return grid


def mode_arg(text: str):
    if str(text) == ep.DIRECT:
        return ep.DIRECT
    try:
        return int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"mode must be 'direct' or a series order, got {text!r}") from exc


def thread_count() -> int:
    env = os.environ.get("EP_SPECTRA_THREADS", "1")
    try:
        n = int(env)
    except ValueError:
        raise ValueError(f"EP_SPECTRA_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise ValueError("EP_SPECTRA_THREADS must be >= 1")
    return n


# ---------------------------------------------------------------- commands


def _direction(args):
    if args.direction is None:
        return em.uniform_ep_direction(args.J)
    return tuple(args.direction)


def cmd_epn_sweep(args):
    model = em.EPNModel(args.J, _direction(args))
    rep = em.ep_sweep(model, args.t_grid, workers=thread_count())
    report = {
        "model": {"half_dimension": model.half_dimension, "coupling_direction": model.coupling_direction},
        "located_ep": rep.located_ep,
        "coalescence_tolerance": rep.coalescence_tolerance,
        "bracket": rep.bracket,
        "grid_points": len(rep.t),
    }
    rows = zip(rep.t, rep.min_gap, rep.max_gap, rep.max_overlap, rep.defect)
    return report, {"sweep": (("t", "min_gap", "max_gap", "max_overlap", "defect"), list(rows))}


def cmd_epn_canon(args):
    model = em.EPNModel(args.J, _direction(args))
    rep = em.ep_sweep(model, args.t_grid, workers=thread_count())
    H = em.chain_hamiltonian(model.at(rep.located_ep.t_ep))
    tm = em.transition_matrix(H, rep.located_ep.E_ep)
    report = {
        "model": {"half_dimension": model.half_dimension, "coupling_direction": model.coupling_direction},
        "located_ep": rep.located_ep,
        "transition_matrix": {
            "R": tm.R,
            "jordan_eigenvalue": tm.jordan_eigenvalue,
            "similarity_residual": tm.similarity_residual,
            "inverse_condition": tm.inverse_condition,
            "chain_residual": tm.chain_residual,
        },
    }
    rows = [(i, j, tm.R[i, j].real, tm.R[i, j].imag) for i in range(tm.R.shape[0]) for j in range(tm.R.shape[1])]
    return report, {"transition_matrix": (("row", "col", "re", "im"), rows)}


def _family(args, rng):
    """Returns ``(family or None, fixed V or None, description)``."""
    N = args.N
    if args.family == "corner":
        fam = ep.corner_family(N, args.exponent)
        return fam, None, {"kind": "corner", "exponent": args.exponent}
    if args.family == "benign":
        mu = rng.uniform(-1.0, 1.0, (N, N))
        return ep.benign_family(mu), None, {"kind": "benign", "mu": mu}
    V = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2 * N)
    fam = ep.PerturbationFamily(N, V / max(1.0, np.abs(V).max()), np.ones((N, N)))
    return fam, V, {"kind": "random", "V": V}


def _effective_V(fam, V, lam):
    return V if V is not None else fam.scaled(lam) / lam


def cmd_epn_perturb(args):
    if args.N < 2:
        raise ValueError("N must be at least 2")
    rng = np.random.default_rng(args.seed)
    fam, V, desc = _family(args, rng)
    results, rows = [], []
    for lam in args.lam:
        if lam <= 0:
            raise ValueError("lambda values must be positive")
        sol = ep.solve_secular(_effective_V(fam, V, lam), lam, mode=args.mode, search=args.search)
        results.append(
            {
                "lambda": lam,
                "roots": sol.roots,
                "reality_flags": sol.reality_flags,
                "residuals": sol.residuals,
                "disk_radius": sol.disk_radius,
                "method": sol.method,
            }
        )
        rows += [(lam, k, z.real, z.imag, f) for k, (z, f) in enumerate(zip(sol.roots, sol.reality_flags))]
    cls = ep.classify_perturbation(fam) if V is None else None
    report = {
        "N": args.N,
        "family": desc,
        "classification": None if cls is None else {"label": cls.label, "witness": cls.witness},
        "results": results,
    }
    return report, {"roots": (("lambda", "index", "re", "im", "real"), rows)}


def cmd_epn_classify(args):
    if args.N < 2:
        raise ValueError("N must be at least 2")
    rng = np.random.default_rng(args.seed)
    fam, V, desc = _family(args, rng)
    if V is not None:
        fam = ep.PerturbationFamily(args.N, V / np.abs(V).max(), np.ones((args.N, args.N)))
    cls = ep.classify_perturbation(fam)
    rescaled = []
    for lam in args.lam:
        red = ep.rescale_reduced(fam, lam)
        rescaled.append({"lambda": lam, "max_abs": red.max_abs, "reconstruction_error": red.reconstruction_error})
    fit = ep.exponent_fit(em.jordan_block(args.N), fam, args.fit_grid)
    report = {
        "N": args.N,
        "family": desc,
        "classification": {"label": cls.label, "witness": cls.witness},
        "rescaling": rescaled,
        "exponent_fit": {"slope": fit.slope, "stderr": fit.stderr, "intercept": fit.intercept},
    }
    rows = list(zip(fit.lambdas, fit.displacements))
    return report, {"exponent_fit": (("lambda", "displacement"), rows)}


def _converged(delta, M, frequency):
    """Spectral data at basis size ``M`` restricted to levels confirmed at ``2M``."""
    table = ic.convergence_study(delta, [M, 2 * M], frequency, workers=thread_count())
    idx = np.flatnonzero(table.converged)
    return table, table.spectra[0].select(idx)


def cmd_ic_spectrum(args):
    M_list = sorted(set(args.M))
    if len(M_list) != len(args.M):
        raise ValueError("M values must be distinct")
    table = ic.convergence_study(args.delta, M_list, args.frequency, workers=thread_count())
    levels = table.eigenvalues[-2] if len(M_list) > 1 else table.eigenvalues[0]
    reality = np.abs(levels.imag) <= 1e-6
    report = {
        "delta": args.delta,
        "frequency": table.frequency,
        "M_list": M_list,
        "pt_residual": {str(M): ic.pt_residual(sd.matrix) for M, sd in zip(M_list, table.spectra)},
        "levels": levels,
        "converged": table.converged,
        "reality_flags": reality,
        "converged_count": table.converged_count,
        "parallelization": None,
        "metric": None,
    }
    tables = {
        "levels": (
            ("n", "re", "im", "converged", "real"),
            [(n, e.real, e.imag, c, r) for n, (e, c, r) in enumerate(zip(levels, table.converged, reality))],
        )
    }
    if len(M_list) > 1 and table.converged_count >= 3:
        sd, sd_ref = table.spectra[-2], table.spectra[-1]
        n_max = args.n_max if args.n_max is not None else table.converged_count - 1
        par = ic.parallelization_diagnostics(sd, n_max, sd_ref)
        report["parallelization"] = par
        tables["parallelization"] = (
            ("n", "overlap_right", "overlap_left", "kappa"),
            [
                (n, par.overlaps_right[n] if n < len(par.overlaps_right) else "", par.overlaps_left[n] if n < len(par.overlaps_left) else "", par.kappa[n])
                for n in range(len(par.kappa))
            ],
        )
        K = min(args.K, table.converged_count)
        window = sd.select(np.flatnonzero(table.converged))
        ref = ic.exact_bb_matrix(args.delta, sd.dimension + 3, table.frequency)
        met = ic.metric_operator(window, K, ref)
        report["metric"] = {
            "K": K,
            "quasi_hermiticity_residual": met.quasi_hermiticity_residual,
            "min_eigenvalue": met.min_eigenvalue,
            "min_eigenvalue_full": met.min_eigenvalue_full,
            "rank": met.rank,
        }
    return report, tables


def cmd_iep_basis(args):
    table, window = _converged(args.delta, args.M, args.frequency)
    count = len(window)
    K = args.K if args.K is not None else max(2, count // 4)
    p_max = args.p_max if args.p_max is not None else min(8, count - K - 1)
    if K + p_max + 1 > count:
        raise ValueError(f"K + p_max + 1 = {K + p_max + 1} exceeds the {count} converged levels")
    cb = ib.assemble_chain_basis(window, K, p_max, phase=args.phase)
    diag = ib.basis_diagnostics(cb, window)
    report = {
        "delta": args.delta,
        "M": args.M,
        "frequency": table.frequency,
        "converged_count": count,
        "K": K,
        "p_max": p_max,
        "phase": cb.phase,
        "coefficients": cb.coefficients,
        "recurrence_residuals": cb.recurrence_residuals,
        "similarity_residual": cb.similarity_residual,
        "boundary_residual": cb.boundary_residual,
        "unit_norm": cb.unit_norm,
        "sigma_min_chain": diag.sigma_min_chain,
        "sigma_min_eig": diag.sigma_min_eig,
    }
    rows = [
        (i, diag.overlap_profile_chain[i], diag.overlap_profile_eig[i]) for i in range(len(diag.overlap_profile_chain))
    ]
    return report, {"overlaps": (("column", "overlap_chain", "overlap_eig"), rows)}


def cmd_iep_perturb(args):
    rng = np.random.default_rng(args.seed)
    if args.energies == "ic":
        _, window = _converged(1, args.M, args.frequency)
        E = np.asarray(window.eigenvalues)
    else:
        E = np.arange(max(ipt.TRUNCATION_STUDY), dtype=float) * args.spacing
    n_eff = min(args.N_trunc, len(E))
    if n_eff < args.N_trunc:
        log.warning("only %d energies available; N_trunc reduced from %d", len(E), args.N_trunc)
    if n_eff < 2:
        raise ValueError("fewer than two energies available")
    size = max(len(E), n_eff)
    V = args.scale * (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / np.sqrt(2)
    res = ipt.closure_boundary_zero(E, V, args.psi0, n_eff)
    J = ipt.chain_form(E, n_eff)
    Vt = V[:n_eff, :n_eff]
    direct, rows = [], []
    for lam in args.lam:
        ref = ipt.direct_reference(J, Vt, lam)
        d = ref.displacements[0]
        remainder = abs(d - lam * res.E1) / lam
        direct.append({"lambda": lam, "E": ref.paired[0], "displacement": d, "remainder": remainder})
        rows.append((lam, ref.paired[0].real, ref.paired[0].imag, remainder))
    h = 1e-6
    fd = (2 * ipt.direct_reference(J, Vt, h).displacements[0] - ipt.direct_reference(J, Vt, 2 * h).displacements[0] / 2) / h
    study = ipt.truncation_study(E, V, args.psi0, ipt.TRUNCATION_STUDY)
    report = {
        "energies": E[:n_eff],
        "energy_source": args.energies,
        "N_trunc_requested": args.N_trunc,
        "N_trunc": n_eff,
        "first_order": {
            "E0": res.E0,
            "E1": res.E1,
            "residual": res.residual,
            "consistency_error": res.consistency_error,
            "boundary_value": res.boundary_value,
            "closure": res.closure,
        },
        "finite_difference_E1": fd,
        "finite_difference_relative_gap": abs(fd - res.E1) / abs(res.E1) if res.E1 != 0 else None,
        "direct": direct,
        "truncation_study": {str(k): v.E1 for k, v in study.items()},
    }
    return report, {"remainder": (("lambda", "E_re", "E_im", "remainder"), rows)}


# ---------------------------------------------------------------- parser


def _common(p):
    p.add_argument("--out", type=Path, default=None, help="output directory (default: JSON to stdout)")
    p.add_argument("--format", choices=("json", "csv", "all"), default="all")
    p.add_argument("--config", type=Path, default=None, help="TOML file with option values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def _sweep_args(p):
    p.add_argument("--J", type=int, default=1, help="half dimension of the chain model")
    p.add_argument("--direction", type=float_list, default=None,
                   help="coupling multipliers, outermost first (default: the uniform-coalescence ray)")
    p.add_argument("--t-grid", type=linear_grid, default="0:1.2:121", help="start:stop:count")


def _family_args(p):
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--family", choices=("corner", "benign", "random"), default="corner")
    p.add_argument("--exponent", type=float, default=1.0, help="lambda exponent of the corner entry")
    p.add_argument("--lambda", dest="lam", type=float_list, default="1e-2,1e-4,1e-6")


def _ic_args(p, M_default):
    p.add_argument("--delta", type=int, choices=(0, 1), default=1)
    p.add_argument("--frequency", type=float, default=None, help="oscillator basis frequency")
    p.add_argument("--M", type=int, default=M_default, help="basis size (checked against 2M)")


COMMANDS = {
    "epn-sweep": ("locate the coalescence point of a chain model", cmd_epn_sweep),
    "epn-canon": ("Jordan chain (transition matrix) at the located point", cmd_epn_canon),
    "epn-perturb": ("secular roots of a perturbed Jordan block", cmd_epn_perturb),
    "epn-classify": ("benign/malign test, rescaling and splitting exponent", cmd_epn_classify),
    "ic-spectrum": ("oscillator-basis spectrum with convergence and eigenbasis diagnostics", cmd_ic_spectrum),
    "iep-basis": ("chain basis over the converged cubic-oscillator levels", cmd_iep_basis),
    "iep-perturb": ("first-order perturbation on the chain canonical form", cmd_iep_perturb),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="ep-spectra", description="Exceptional-point spectral toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}
    for name, (help_text, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _common(p)
        subs[name] = p
    _sweep_args(subs["epn-sweep"])
    _sweep_args(subs["epn-canon"])
    for name in ("epn-perturb", "epn-classify"):
        _family_args(subs[name])
    subs["epn-perturb"].add_argument("--mode", type=mode_arg, default=ep.DIRECT, help="'direct' or a series order")
    subs["epn-perturb"].add_argument("--search", choices=("polynomial", "grid"), default="polynomial")
    subs["epn-classify"].add_argument("--fit-grid", type=geometric_grid, default="1e-10:1e-6:9",
                                      help="geometric lambda grid start:stop:count for the exponent fit")
    p = subs["ic-spectrum"]
    p.add_argument("--delta", type=int, choices=(0, 1), default=1)
    p.add_argument("--frequency", type=float, default=None, help="oscillator basis frequency")
    p.add_argument("--M", type=int_list, default="64,128", help="ascending basis sizes")
    p.add_argument("--K", type=int, default=8, help="metric rank")
    p.add_argument("--n-max", type=int, default=None)
    p = subs["iep-basis"]
    _ic_args(p, 128)
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--p-max", type=int, default=None)
    p.add_argument("--phase", choices=ib.PHASES, default="decoupled")
    p = subs["iep-perturb"]
    p.add_argument("--frequency", type=float, default=None)
    p.add_argument("--M", type=int, default=128)
    p.add_argument("--energies", choices=("ic", "equidistant"), default="ic")
    p.add_argument("--spacing", type=float, default=2.0, help="level spacing for equidistant energies")
    p.add_argument("--N-trunc", type=int, default=ipt.DEFAULT_N_TRUNC)
    p.add_argument("--lambda", dest="lam", type=float_list, default="1e-4,1e-6,1e-8")
    p.add_argument("--scale", type=float, default=1.0, help="entry scale of the random perturbation")
    p.add_argument("--psi0", type=float, default=1.0)
    return parser, subs


def _config_defaults(path: Path, command: str, sub: argparse.ArgumentParser) -> dict:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    section = data.get(command, {})
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(section)
    known = {a.dest: a for a in sub._actions}
    out = {}
    for key, value in flat.items():
        dest = key.replace("-", "_")
        if dest == "lambda":
            dest = "lam"
        if dest not in known or dest in ("config", "help"):
            raise ValueError(f"unknown option {key!r} in {path} for {command}")
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif not isinstance(value, (str, bool)):
            value = str(value)
        out[dest] = value
    return out


def parse_args(argv=None):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        sub = subs[args.command]
        sub.set_defaults(**_config_defaults(args.config, args.command, sub))
        args = parser.parse_args(argv)
    return args


def _parameters(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in RUN_KEYS}


def run(args) -> int:
    start = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat()
    _, handler = COMMANDS[args.command]
    body, tables = handler(args)
    report = {"schema_version": SCHEMA_VERSION, "command": args.command, "parameters": _parameters(args)}
    report.update(body)
    payload = dumps(report)
    if args.out is None:
        sys.stdout.write(payload)
        return EXIT_OK
    args.out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.format in ("json", "all"):
        (args.out / "report.json").write_text(payload, encoding="utf-8")
        written.append("report.json")
    if args.format in ("csv", "all"):
        for name, (header, rows) in tables.items():
            (args.out / f"{name}.csv").write_text(csv_text(header, rows), encoding="utf-8")
            written.append(f"{name}.csv")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "verbose")},
        "seed": args.seed,
        "threads": thread_count(),
        "versions": versions(),
        "started_at": started,
        "wall_time_s": time.perf_counter() - start,
        "outputs": written,
    }
    (args.out / "manifest.json").write_text(dumps(manifest), encoding="utf-8")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code) if exc.code is not None else EXIT_OK
    except (ValueError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"ep-spectra: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except NumericalFailure as exc:
        print(f"ep-spectra: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, EPSpectraError) as exc:
        print(f"ep-spectra: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
