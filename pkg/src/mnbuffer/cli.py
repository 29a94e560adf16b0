"""Command line runner: single runs, tau sweeps, figure datasets, fits.

Every CSV gets one ``<name>.manifest.json`` next to it with the resolved
configuration, derived couplings, solver settings and wall time.

Exit codes: 0 success, 2 bad configuration or input, 3 integration or
fit failure, 4 resource cap hit.
"""

import argparse
import csv
import datetime
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, dynamics, protocol
from .config import load_config
from .errors import (
    BufferSimError,
    ConfigError,
    FitError,
    IntegrationError,
    ParameterError,
    ResourceError,
)
from .model import derive_couplings

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_RESOURCE = 4

FIGURES = ("fig2", "fig3", "fig4a", "fig4b", "fig4cd", "fig5a", "fig5b", "fig6")
FIG3_J = (0.05, 0.25, 0.4)
FIG4_DELTAS = (1.0, 1.5, 1.85, 2.5, 3.0)
FIG4_TEMPERATURES = (4.0, 20.0, 50.0, 77.0)
FIG4CD_DELTA = 0.95
FIG5_TAU = 15.5
LONG_RUNNING = {"fig4cd", "fig5b"}


def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


class Output:
    """Writes CSV tables, their manifests and optional PNGs into one directory."""

    def __init__(self, directory, cfg, command):
        self.dir = Path(directory)
        self.cfg = cfg
        self.command = command
        self.plot = bool(cfg.get("output.plot"))
        self.written = []
        self.t0 = time.perf_counter()

    def table(self, name, columns, rows, **extra):
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        manifest = {
            "tool": "mnbuffer",
            "version": __version__,
            "command": self.command,
            "csv": path.name,
            "columns": list(columns),
            "config": self.cfg.values,
            "derived": _derived(self.cfg),
            "convergence": _convergence(self.cfg),
            "timing": {
                "wall_s": time.perf_counter() - self.t0,
                "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
            },
        }
        manifest.update(extra)
        with open(self.dir / f"{name}.manifest.json", "w", encoding="utf-8") as fh:
            json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.written.append(path)
        return path

    def figure(self, name, draw, *args, **kw):
        if not self.plot:
            return None
        from . import plotting

        self.dir.mkdir(parents=True, exist_ok=True)
        return getattr(plotting, draw)(self.dir / f"{name}.png", *args, **kw)


def _derived(cfg):
    c = derive_couplings(cfg.model_params())
    return {"j_e_meV": c.j_e, "j_h_meV": c.j_h, "J_meV": c.J, "delta_eff_meV": c.delta_eff}


def _convergence(cfg):
    out = {
        "lindblad": {
            "rtol": dynamics.DEFAULT_RTOL,
            "atol": dynamics.DEFAULT_ATOL,
            "pulse_rtol": dynamics.PULSE_RTOL,
            "pulse_atol": dynamics.PULSE_ATOL,
            "dissipator_substep_ps": dynamics.SUBSTEP,
        }
    }
    out["quapi"] = cfg.section("quapi")
    return out


def quapi_config(cfg):
    from .phonons import QuapiConfig

    q = cfg.section("quapi")
    return QuapiConfig(
        dt=q["dt_ps"],
        n_mem=q["n_mem"],
        fold_tail=q["fold_tail"],
        compensate_polaron_shift=q["compensate_polaron_shift"],
        max_adm_entries=q["max_adm_entries"],
    )


def protocol_spec(cfg, params, readout=True, **overrides):
    p = {**cfg.section("protocol"), **overrides}
    kw = {}
    if p["n_max"] is not None:
        kw["n_max"] = int(p["n_max"])
    elif p["phonons"]:
        # one photon above the initial number is converged to < 1e-6 and
        # keeps the path-integral state small
        kw["n_max"] = int(p["initial_photons"]) + 1
    if p["horizon_ps"] is not None:
        kw["horizon"] = p["horizon_ps"]
    gauss = (p["theta_pi"] * np.pi, p["fwhm_ps"], p["t0_ps"]) if p["shape"] == "gauss" else None
    return protocol.design_protocol(
        params,
        tau=p["tau_ps"],
        initial_photons=p["initial_photons"],
        shape=p["shape"],
        t_on=p["t_on_ps"],
        alpha=p["alpha_per_ps"],
        gauss=gauss,
        readout=readout,
        losses=p["losses"],
        phonons=p["phonons"],
        sample_dt=p["sample_dt_ps"],
        **kw,
    )


def tau_grid_ps(cfg):
    s = cfg.section("sweep")
    if s["points"] < 1 or s["tau_max_ns"] < s["tau_min_ns"]:
        raise ConfigError("sweep needs points >= 1 and tau_max_ns >= tau_min_ns")
    return np.linspace(s["tau_min_ns"], s["tau_max_ns"], s["points"]) * 1e3


def _quapi_or_none(spec, cfg):
    return quapi_config(cfg) if spec.phonons else None


def _run(cfg, params, **overrides):
    spec = protocol_spec(cfg, params, **overrides)
    return spec, protocol.run(spec, params, _quapi_or_none(spec, cfg))


def _sweep(cfg, params, **overrides):
    spec = protocol_spec(cfg, params, **overrides)
    table = protocol.sweep_tau(
        spec, params, tau_grid_ps(cfg), _quapi_or_none(spec, cfg), workers=cfg.get("run.workers")
    )
    return spec, table


def _result_meta(res):
    return {
        "tau_convention": res.timing.get("tau_convention"),
        "timing_ps": {k: v for k, v in res.timing.items() if k.endswith("_ps")},
        "metrics": {"c1po": res.c1po, "c2po": res.c2po, "max_dark_after_write": res.max_dark_after_write},
    }


def _fit_or_error(tau_ns, values, delta_eff, tau_min_ns=None):
    try:
        f = analysis.fit_exponential(tau_ns, values, delta_eff=delta_eff, tau_min_ns=tau_min_ns)
    except (FitError, ParameterError) as exc:
        return None, str(exc)
    return f, None


def _fit_record(f, err):
    if f is None:
        return {"error": err}
    return {"c": f.c, "tau_star_ns": f.tau_star, "rms": f.rms, **f.meta}


# commands


def cmd_derive(cfg, out, args):
    c = derive_couplings(cfg.model_params())
    print(f"j_e      = {c.j_e:.6f} meV")
    print(f"j_h      = {c.j_h:.6f} meV")
    print(f"J        = {c.J:.6f} meV")
    print(f"delta_eff = {c.delta_eff:.6f} meV")
    return c


def cmd_simulate(cfg, out, args):
    params = cfg.model_params()
    spec, res = _run(cfg, params)
    s = res.series
    out.table("simulate", s.columns(), s.rows(), **_result_meta(res))
    out.figure("simulate", "time_series", {"": (s.columns(), s.rows())})
    print(f"c1po = {_fmt(res.c1po)}  c2po = {_fmt(res.c2po)}  max_dark_after_write = {_fmt(res.max_dark_after_write)}")
    return res


def cmd_sweep(cfg, out, args):
    params = cfg.model_params()
    spec, table = _sweep(cfg, params)
    out.table("sweep", table.columns(), table.rows(), tau_convention=table.meta["tau_convention"])
    cols = table.columns()
    out.figure(
        "sweep",
        "curves",
        {c: (table.tau_ps * 1e-3, table.rows()[:, i + 1]) for i, c in enumerate(cols[1:])},
        "tau (ns)",
        "captured occupation",
    )
    return table


def fig2(cfg, out):
    params = cfg.model_params()
    curves = {}
    for label, losses in (("ideal", False), ("losses", True)):
        spec, res = _run(cfg, params, losses=losses, phonons=False)
        s = res.series
        out.table(f"fig2_{label}", s.columns(), s.rows(), **_result_meta(res))
        curves[label] = (s.columns(), s.rows())
    out.figure("fig2", "time_series", {"losses": curves["losses"], "ideal": curves["ideal"]})


def fig3(cfg, out):
    series = {}
    fits = []
    for J in FIG3_J:
        c = cfg.with_(model__J=J)
        params = c.model_params()
        spec, table = _sweep(c, params, phonons=False)
        tau_ns = table.tau_ps * 1e-3
        rows = [(J, t, y) for t, y in zip(tau_ns, table.c1po)]
        f, err = _fit_or_error(tau_ns, table.c1po, derive_couplings(params).delta_eff)
        fits.append((J, f))
        out.table(
            f"fig3_J{J:g}",
            ["J_meV", "tau_ns", "c1po"],
            rows,
            tau_convention=table.meta["tau_convention"],
            fit=_fit_record(f, err),
        )
        series[f"J = {J:g} meV"] = (tau_ns, table.c1po)
    out.table(
        "fig3_fits",
        ["J_meV", "c", "tau_star_ns", "rms"],
        [(J, f.c, f.tau_star, f.rms) if f else (J, None, None, None) for J, f in fits],
    )
    out.figure("fig3", "curves", series, "tau (ns)", "C1PO")


def _delta_scan(cfg):
    rows = []
    for delta in FIG4_DELTAS:
        c = cfg.with_(model__delta_eff=delta)
        params = c.model_params()
        spec, table = _sweep(c, params, phonons=False)
        tau_ns = table.tau_ps * 1e-3
        f, err = _fit_or_error(tau_ns, table.c1po, delta)
        J = derive_couplings(params).J
        analytic = analysis.analytic_tau(J, delta, params.gamma_X, params.gamma_D)
        c1po_0 = table.c1po[0] if table.tau_ps[0] == 0 else np.nan
        rows.append((delta, f, err, analytic, c1po_0, table.meta["tau_convention"]))
    return rows


def fig4a(cfg, out):
    rows = _delta_scan(cfg)
    out.table(
        "fig4a",
        ["delta_eff_meV", "tau_star_ns", "tau_star_analytic_ns"],
        [(d, f.tau_star if f else None, a) for d, f, _, a, _, _ in rows],
        fits={_fmt(d): _fit_record(f, e) for d, f, e, _, _, _ in rows},
        tau_convention=rows[0][5],
    )
    d = [r[0] for r in rows]
    out.figure(
        "fig4a",
        "curves",
        {"fit": (d, [r[1].tau_star if r[1] else np.nan for r in rows]), "analytic": (d, [r[3] for r in rows])},
        "delta_eff (meV)",
        "tau* (ns)",
    )


def fig4b(cfg, out):
    rows = _delta_scan(cfg)
    out.table(
        "fig4b",
        ["delta_eff_meV", "c1po_tau0"],
        [(d, c0) for d, _, _, _, c0, _ in rows],
        tau_convention=rows[0][5],
    )
    out.figure("fig4b", "curves", {"": ([r[0] for r in rows], [r[4] for r in rows])}, "delta_eff (meV)", "C1PO(0)")


def fig4cd(cfg, out):
    base = cfg.with_(model__delta_eff=FIG4CD_DELTA)
    rows, fits = [], {}
    for T in FIG4_TEMPERATURES:
        c = base.with_(model__temperature=T)
        spec, table = _sweep(c, c.model_params(), phonons=True)
        tau_ns = table.tau_ps * 1e-3
        f, err = _fit_or_error(tau_ns, table.c1po, FIG4CD_DELTA)
        fits[_fmt(T)] = _fit_record(f, err)
        c1po_0 = table.c1po[0] if table.tau_ps[0] == 0 else np.nan
        rows.append((T, f.tau_star if f else None, c1po_0))
        out.table(
            f"fig4cd_T{T:g}",
            ["T_K", "tau_ns", "c1po"],
            [(T, t, y) for t, y in zip(tau_ns, table.c1po)],
            tau_convention=table.meta["tau_convention"],
            fit=fits[_fmt(T)],
        )
    ref_spec, ref = _sweep(base, base.model_params(), phonons=False)
    f0, err0 = _fit_or_error(ref.tau_ps * 1e-3, ref.c1po, FIG4CD_DELTA)
    out.table(
        "fig4cd",
        ["T_K", "tau_star_ns", "c1po_tau0"],
        rows,
        fits=fits,
        phonon_free={"fit": _fit_record(f0, err0), "c1po_tau0": ref.c1po[0] if ref.tau_ps[0] == 0 else None},
    )
    T = [r[0] for r in rows]
    out.figure("fig4c", "curves", {"": (T, [r[1] for r in rows])}, "T (K)", "tau* (ns)")
    out.figure("fig4d", "curves", {"": (T, [r[2] for r in rows])}, "T (K)", "C1PO(0)")


def fig5a(cfg, out):
    params = cfg.model_params()
    curves = {}
    for label, losses in (("ideal", False), ("losses", True)):
        spec, res = _run(cfg, params, tau_ps=FIG5_TAU, initial_photons=2, losses=losses, phonons=False)
        s = res.series
        out.table(f"fig5a_{label}", s.columns(), s.rows(), **_result_meta(res))
        curves[label] = (s.columns(), s.rows())
    out.figure("fig5a", "time_series", {"losses": curves["losses"], "ideal": curves["ideal"]})


def fig5b(cfg, out):
    c = cfg.with_(model__delta_eff=FIG4CD_DELTA)
    spec, table = _sweep(c, c.model_params(), initial_photons=2, phonons=True)
    out.table("fig5b", table.columns(), table.rows(), tau_convention=table.meta["tau_convention"])
    tau_ns = table.tau_ps * 1e-3
    out.figure("fig5b", "curves", {"C1PO": (tau_ns, table.c1po), "C2PO": (tau_ns, table.c2po)}, "tau (ns)", "occupation")


def _optimum(cfg, params, phonons):
    o = cfg.section("optimize")
    spec = protocol_spec(cfg, params, readout=False, phonons=phonons)
    return analysis.optimize_gaussian(
        params,
        np.asarray(o["theta_pi"]) * np.pi,
        o["fwhm_ps"],
        o["t0_ps"],
        phonons=phonons,
        losses=spec.losses,
        quapi=quapi_config(cfg) if phonons else None,
        refine=o["refine"],
        workers=cfg.get("run.workers"),
    )


def _grid_rows(opt):
    return [(th / np.pi, fw, t0, d) for th, fw, t0, d in opt.evaluations]


GRID_COLUMNS = ["theta_pi", "fwhm_ps", "t0_ps", "max_dark"]


def fig6(cfg, out):
    params = cfg.model_params()
    phonons = bool(cfg.get("protocol.phonons"))
    opt = _optimum(cfg, params, phonons)
    rect_spec, rect = _run(cfg, params, readout=False, shape="rect", phonons=phonons)
    gauss_spec, gauss = _run(
        cfg,
        params,
        readout=False,
        shape="gauss",
        theta_pi=opt.theta / np.pi,
        fwhm_ps=opt.fwhm,
        t0_ps=opt.t0,
        phonons=phonons,
    )
    for label, res in (("rect", rect), ("gauss", gauss)):
        s = res.series
        out.table(f"fig6_{label}", s.columns(), s.rows(), **_result_meta(res))
    out.table("fig6_grid", GRID_COLUMNS, _grid_rows(opt))
    out.table(
        "fig6",
        ["shape", "theta_pi", "fwhm_ps", "t0_ps", "max_dark"],
        [
            ("rect", None, None, None, rect.max_dark_after_write),
            ("gauss", opt.theta / np.pi, opt.fwhm, opt.t0, opt.dark),
        ],
    )
    out.figure(
        "fig6",
        "time_series",
        {"rect": (rect.series.columns(), rect.series.rows()), "gauss": (gauss.series.columns(), gauss.series.rows())},
    )


def cmd_fig(cfg, out, args):
    if args.name in LONG_RUNNING or (args.name == "fig6" and cfg.get("protocol.phonons")):
        print(f"{args.name}: phonon path-integral runs, expect a long runtime", file=sys.stderr)
    globals()[args.name](cfg, out)


def cmd_optimize(cfg, out, args):
    params = cfg.model_params()
    phonons = bool(cfg.get("protocol.phonons"))
    opt = _optimum(cfg, params, phonons)
    out.table(
        "optimize_pulse",
        GRID_COLUMNS,
        _grid_rows(opt),
        best={"theta_pi": opt.theta / np.pi, "fwhm_ps": opt.fwhm, "t0_ps": opt.t0, "max_dark": opt.dark},
    )
    print(
        f"theta = {opt.theta / np.pi:.6g} pi  fwhm = {opt.fwhm:.6g} ps  t0 = {opt.t0:.6g} ps  "
        f"max_dark = {opt.dark:.6f}"
    )
    return opt


def read_table(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(x) if x else np.nan for x in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry ({exc})") from exc
    return header, data.reshape(len(body), len(header))


def cmd_fit(cfg, out, args):
    header, data = read_table(args.csv)
    column = args.column or cfg.get("fit.column")
    missing = [c for c in ("tau_ns", column) if c not in header]
    if missing:
        raise ConfigError(
            f"{args.csv}: missing column(s) {', '.join(missing)}; found {', '.join(header)}; "
            "expected a sweep table with tau_ns and the fitted column"
        )
    tau = data[:, header.index("tau_ns")]
    y = data[:, header.index(column)]
    delta = derive_couplings(cfg.model_params()).delta_eff
    f = analysis.fit_exponential(tau, y, delta_eff=delta, tau_min_ns=cfg.get("fit.tau_min_ns"))
    stem = Path(args.csv).stem
    out.table(
        f"{stem}_fit_{column}",
        ["c", "tau_star_ns", "rms"],
        [(f.c, f.tau_star, f.rms)],
        source=str(args.csv),
        column=column,
        fit=_fit_record(f, None),
    )
    print(f"c = {f.c:.6g}  tau* = {f.tau_star:.6g} ns  rate = {f.rate:.6g} /ns  rms = {f.rms:.3g}")
    return f


COMMANDS = {
    "derive": cmd_derive,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "fig": cmd_fig,
    "optimize-pulse": cmd_optimize,
    "fit": cmd_fit,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--bz", type=float, help="magnetic field B_z in T (model.B_z)")
    common.add_argument("--mn", help="Mn position as box fractions x,y,z (model.mn_position)")
    common.add_argument("--tau", type=float, help="buffer time in ps (protocol.tau_ps)")
    common.add_argument("--temperature", type=float, help="phonon temperature in K (model.temperature)")
    common.add_argument("--phonons", action="store_true", default=None, help="include LA phonons (protocol.phonons)")
    common.add_argument("--workers", type=int, help="parallel workers (run.workers)")
    common.add_argument("--out", help="output directory (output.dir)")
    common.add_argument("--plot", action="store_true", default=None, help="also render PNG figures (output.plot)")

    parser = argparse.ArgumentParser(prog="mnbuffer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("derive", parents=[common], help="print derived exchange couplings")
    sub.add_parser("simulate", parents=[common], help="one protocol run, time series CSV")
    sub.add_parser("sweep", parents=[common], help="C1PO/C2PO versus buffer time")
    fig = sub.add_parser("fig", parents=[common], help="figure datasets")
    fig.add_argument("name", choices=FIGURES)
    sub.add_parser("optimize-pulse", parents=[common], help="Gaussian write-pulse grid search")
    fit = sub.add_parser("fit", parents=[common], help="exponential fit of a sweep CSV")
    fit.add_argument("csv")
    fit.add_argument("--column", help="column to fit (fit.column)")
    return parser


def _flag_overrides(args):
    flags = {
        "bz": "model.B_z",
        "mn": "model.mn_position",
        "tau": "protocol.tau_ps",
        "temperature": "model.temperature",
        "phonons": "protocol.phonons",
        "workers": "run.workers",
        "out": "output.dir",
        "plot": "output.plot",
    }
    out = []
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.append(f"{key}={value}")
    return out


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, list(args.set) + _flag_overrides(args))
        out = Output(cfg.get("output.dir"), cfg, " ".join(["mnbuffer"] + list(argv if argv is not None else sys.argv[1:])))
        COMMANDS[args.command](cfg, out, args)
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (IntegrationError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BufferSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
