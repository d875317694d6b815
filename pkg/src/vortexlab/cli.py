"""
``vortexlab`` command line.

Exit status: 0 success, 1 usage or validation error, 2 numerical failure.
Every subcommand writes its files plus ``manifest.json`` into the output
directory (``--out-dir``, else ``$VORTEXLAB_OUTPUT_DIR``, else the config
value, else ``./vortexlab_out``).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import io

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vortexlab", description="Beltrami flows, vortex topology and torus breakdown on T^3.")
    p.add_argument("--version", action="version", version=f"vortexlab {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for cmd in cfgmod.SCHEMA:
        sp = sub.add_parser(cmd, help=_HELP[cmd])
        sp.add_argument("--config", help="key = value file; keys before any section or under [%s]" % cmd)
        for key, spec in cfgmod.schema_for(cmd).items():
            sp.add_argument(_flag(key), dest=key, default=None,
                            help=f"{spec.help} (default: {_show(spec.default)})")
    return p


def _show(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v) or "none"
    return v


_HELP = {
    "beltrami-gen": "write a Beltrami field snapshot or a rational point list",
    "simulate": "integrate Navier-Stokes and write snapshots, diagnostics and a stability report",
    "trace": "trace one vortex line of a snapshot",
    "classify": "classify the vortex lines of a snapshot",
    "melnikov": "Melnikov profile, zeros and the return-map diagnostic",
    "scenario": "constants, dominance schedule and the desk-scale scenario",
    "constants": "choose and verify the constant cascade",
    "verify": "re-verify a constants file or audit a snapshot",
}


# ---------------------------------------------------------------------------
# subcommands


def _grid(n):
    from .spectral import Grid
    return Grid(int(n))


def cmd_beltrami_gen(c, out: Path, man: io.RunManifest):
    from . import beltrami as bt
    from .spectral import l2_norm
    fam, N = c["family"], c["N"]
    if fam == "points":
        pts = bt.rational_sphere_points(N)
        path = man.add_output(out / f"points_N{N}.csv")
        io.write_csv(path, ["k1", "k2", "k3", "N"], [(*p.k, p.N) for p in pts])
        print(f"{len(pts)} rational points of height {N}")
        return
    g = _grid(c["grid"])
    if fam == "shear":
        f = bt.shear_beltrami(N, g, c["axis"])
    elif fam == "reynolds":
        f = bt.reynolds_beltrami(N, g)
    else:
        amp = bt.AMPLITUDE_LIBRARY[c["amplitude"]]()
        pts = bt.rational_sphere_points(N)
        f = bt.beltrami_project(bt.herglotz_sample(amp, N, g, pts), N)
        path = man.add_output(out / f"points_N{N}.csv")
        io.write_csv(path, ["k1", "k2", "k3", "N"], [(*p.k, p.N) for p in pts])
    path = man.add_output(out / c["output"])
    io.write_snapshot(f, path)
    print(f"wrote {path} (L2 norm {l2_norm(f):.17g}, eigen residual {bt.eigen_residual(f, N):.3g})")


def cmd_simulate(c, out: Path, man: io.RunManifest):
    from . import nse, stability as st
    from .beltrami import SHEAR_AMPLITUDE, shear_beltrami
    from .spectral import l2_norm
    nu, alpha = c["nu"], c["alpha"]
    times = tuple(c["times"])
    w0 = None
    if c["input"]:
        man.add_input(c["input"])
        u0 = io.read_snapshot(c["input"]).field
    else:
        g = _grid(c["grid"])
        w0 = shear_beltrami(c["N"], g)
        u0 = w0 if c["delta"] == 0 else w0 + shear_beltrami(1, g, axis=1) * c["delta"]
    res = nse.run(u0, nu, times, dt=c["dt"], alpha=alpha)
    for i, s in enumerate(res.snapshots):
        io.write_snapshot(s.u, man.add_output(out / f"snapshot_{i:03d}.vxf"), nu, s.t, alpha)
    io.write_csv(man.add_output(out / "diagnostics.csv"), ["t", "l2", "h1", "divergence_residual", "dt"],
                 [(d.t, d.l2, d.h1, d.div, d.dt) for d in res.diagnostics])
    if w0 is not None and c["delta"] != 0 and alpha == 1.0:
        N, r = c["N"], c["r"]
        ts = np.array((0.0,) + times)
        vs = [u0 - w0] + [s.u - nse.beltrami_solution(w0, N, nu, s.t) for s in res.snapshots]
        hist = st.energy_history(ts, vs, r)
        Q = st.q_recursion(st.beltrami_sup_histories(1.0, N, nu, ts, r), r, ts)
        K = SHEAR_AMPLITUDE ** 2 / (2 * nu * N * N)
        env = st.verify_decay_envelope(hist, Q, nu, c["sigma"], K)
        io.write_csv(man.add_output(out / "stability.csv"), ["t", "m", "h_m", "Q_m", "envelope", "C_star"],
                     st.report_rows(hist, Q, env, nu, c["sigma"], K))
        print("fitted C*: " + ", ".join(f"m={e.m}: {e.C_star:.6g}" for e in env))
    print(f"final L2 norm {l2_norm(res.snapshots[-1].u):.17g} at t = {res.snapshots[-1].t:g}")


def _load_field(c, man):
    if not c["input"]:
        raise UsageError("--input snapshot is required")
    man.add_input(c["input"])
    return io.read_snapshot(c["input"]).field


def cmd_trace(c, out: Path, man: io.RunManifest):
    from . import topology as tp
    u = _load_field(c, man)
    lf = tp.LineField.from_field(u, c["vorticity"])
    seed = np.asarray(c["seed_point"], float)
    if seed.shape != (3,):
        raise UsageError("--seed-point needs three coordinates")
    line = tp.trace_vortex_line(lf, seed, c["tau"], c["tol"], c["h_max"])
    io.write_csv(man.add_output(out / "line.csv"), ["tau", "x1", "x2", "x3", "X1", "X2", "X3"], line.rows())
    rep = tp.winding_classification(line)
    rec = dict(kind=rep.kind, label=rep.label, winding=rep.winding, direction=rep.direction,
               period=line.period if line.closed else None, steps=line.nsteps)
    io.write_records(man.add_output(out / "winding.jsonl"), [rec])
    print(json.dumps(rec, default=io._jsonable))


def cmd_classify(c, out: Path, man: io.RunManifest):
    from . import topology as tp
    u = _load_field(c, man)
    lf = tp.LineField.from_field(u, c["vorticity"])
    summ = tp.classify_structures(u, tp.lattice_seeds(c["seeds"]), tp.turnover_tau(lf, c["periods"]),
                                  c["tol"], is_vorticity=c["vorticity"])
    io.write_records(man.add_output(out / "classification.jsonl"), list(summ.records()))
    io.write_records(man.add_output(out / "verdict.jsonl"),
                     [dict(verdict=summ.verdict, undetermined_fraction=summ.undetermined_fraction,
                           seeds=len(summ.seeds))])
    print(summ.verdict)
    if summ.verdict.startswith("undetermined"):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_melnikov(c, out: Path, man: io.RunManifest):
    from . import melnikov as mk
    target = mk.ResonanceTarget(c["p"], c["q"])
    setup = mk.prepare(target, c["M"], c["nu"], c["eps"], grid=_grid(c["grid"]))
    prof = mk.melnikov_numeric(setup, c["samples"])
    io.write_csv(man.add_output(out / "melnikov.csv"), ["xi", "M_numeric", "M_closed_form", "abs_difference"],
                 prof.rows())
    zeros = mk.find_zeros(prof)
    io.write_records(man.add_output(out / "zeros.jsonl"),
                     [dict(xi=z.xi, slope=z.slope, degenerate=z.degenerate) for z in zeros])
    print(f"max relative deviation {prof.max_relative_deviation():.3e}; {len(zeros)} zeros")
    if c["breakdown"]:
        rep = mk.breakdown_diagnostic(setup)
        io.write_records(man.add_output(out / "survivors.jsonl"),
                         [dict(status=rep.status, t_probe=rep.t_probe, **r) for r in rep.records()]
                         or [dict(status=rep.status, t_probe=rep.t_probe)])
        print(f"breakdown: {rep.status}, {rep.counts()}")


def _write_constants(C, path, man):
    io.atomic_write(man.add_output(path), C.to_text())


def cmd_constants(c, out: Path, man: io.RunManifest):
    from . import scenario as sc
    C = sc.choose_constants(c["M"], c["nu"], c["r"], c["times"], c["margin"], prec=c["prec"])
    _write_constants(C, out / c["output"], man)
    print(" ".join(f"{k}={'true' if v else 'false'}" for k, v in C.flags.items()))


def cmd_scenario(c, out: Path, man: io.RunManifest):
    from . import scenario as sc
    import mpmath
    if c["mode"] == "verify-only":
        C = sc.choose_constants(c["M"], c["nu"], c["r"], c["times"], c["margin"], prec=c["prec"])
        rep = sc.run_scenario(C, mode="verify-only")
    else:
        if len(c["N"]) != len(c["times"]) + 1:
            raise UsageError("desk-dns needs --N with one more entry than --times")
        C = sc.desk_constants(c["M"], c["nu"], c["N"], c["delta1"], c["times"], c["margin"], c["r"], c["prec"])
        rep = sc.run_scenario(C, _grid(c["grid"]), "desk-dns", dt=c["dt"], seeds=c["seeds"])
    _write_constants(C, out / "constants.txt", man)
    rows = []
    for k, row in enumerate(rep.schedule.log_coeff, 1):
        for j, lc in enumerate(row):
            rows.append((k, float(C.times[k - 1]), j, mpmath.nstr(lc, 20), k == j))
    io.write_csv(man.add_output(out / "schedule.csv"), ["k", "T", "j", "log_coefficient", "self"], rows)
    recs = [dict(k=k, T=float(C.times[k - 1]), dominant=d) for k, d in enumerate(rep.schedule.dominant, 1)]
    recs += rep.rows()
    io.write_records(man.add_output(out / "report.jsonl"), recs)
    print(f"dominant indices {rep.schedule.dominant}; flags " +
          " ".join(f"{k}={'true' if v else 'false'}" for k, v in rep.flags.items()))
    if rep.mode == "desk-dns":
        print("inconclusive" if rep.inconclusive else ("consistent" if rep.consistent else "inconsistent"))
        if rep.inconclusive:
            return EXIT_NUMERICAL


def cmd_verify(c, out: Path, man: io.RunManifest):
    from . import scenario as sc
    status = EXIT_OK
    recs = []
    if not c["constants_file"] and not c["snapshot"]:
        raise UsageError("give --constants-file and/or --snapshot")
    if c["constants_file"]:
        man.add_input(c["constants_file"])
        C = sc.constants_from_text(Path(c["constants_file"]).read_text())
        for ch in C.checks():
            recs.append(dict(check=ch.name, ok=ch.ok))
        print(" ".join(f"{k}={'true' if v else 'false'}" for k, v in C.flags.items()))
        if not C.all_ok:
            status = EXIT_INVALID
    if c["snapshot"]:
        from .spectral import l2_norm
        man.add_input(c["snapshot"])
        s = io.read_snapshot(c["snapshot"])
        f = s.field
        rec = dict(snapshot=c["snapshot"], n=f.grid.n, nu=s.nu, t=s.t, alpha=s.alpha, flags=s.flags,
                   l2=l2_norm(f), divergence_residual=f.divergence_residual(),
                   reality_residual=f.reality_residual())
        recs.append(rec)
        print(json.dumps(rec, default=io._jsonable))
    io.write_records(man.add_output(out / "verify.jsonl"), recs)
    return status


COMMANDS = {
    "beltrami-gen": cmd_beltrami_gen,
    "simulate": cmd_simulate,
    "trace": cmd_trace,
    "classify": cmd_classify,
    "melnikov": cmd_melnikov,
    "scenario": cmd_scenario,
    "constants": cmd_constants,
    "verify": cmd_verify,
}


def _numerical_errors():
    from .nse import CFLError, NumericalFailure
    from .scenario import ConstantsError
    return (CFLError, NumericalFailure, ConstantsError, FloatingPointError, ArithmeticError)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    numerical = _numerical_errors()
    man = None
    out = None
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_INVALID
        file_vals = {}
        if ns.config:
            file_vals = cfgmod.parse_config_text(Path(ns.config).read_text(), ns.command)
        flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
        c = cfgmod.resolve(ns.command, file_vals, flags)
        out = Path(c["out_dir"])
        man = io.RunManifest(ns.command, c, __version__)
        if ns.config:
            man.add_input(ns.config)
        status = COMMANDS[ns.command](c, out, man)
        return EXIT_OK if status is None else status
    except numerical as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        if man is not None and man.outputs:
            man.write(out)


if __name__ == "__main__":
    sys.exit(main())
