"""Command-line driver: ``lcturnpike <subcommand> --config path``.

Subcommands run the pipeline up to the named stage and write JSON/CSV
artifacts plus ``manifest.json`` into the output directory:

* ``decompose``    ``decomposition.json``
* ``feasibility``  adds ``certificate_<i>.json``
* ``steady``       adds ``steady_<i>.json``
* ``solve``        adds ``trajectory_<i>_<T>.csv``
* ``turnpike``     adds deviation series, plot data and ``report_<i>.json``
* ``sweep``        value-gap sweep, ``report_<i>.json`` only
* ``validate``     oracle and diagnostic checks, ``validation.json``

Exit codes: 0 success, 2 when ``b`` is outside ``im(A, B)`` or no initial
state is feasible, 3 on solver or consistency failure, 4 on bad config.
Every failure also writes ``error.json``.
"""

import argparse
import hashlib
import json
import math
import os
import sys as _sys
import warnings

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, ConsistencyError, FeasibilityError, TurnpikeError
from .feasibility import build_spaces, certify
from .horizon import (Grid, pmp_residual, pole_place_feedback,
                      riccati_lq_oracle, solve_lc, suboptimal_feedback_run)
from .kalman import decompose, hautus_controllable
from .steady import qp_oracle_steady, solve_steady
from .system_model import QuadraticCost, check_a2, check_a3
from .turnpike import (TurnpikeReport, analyze_trajectory, deviation_series,
                       lemma_identity_residual, value_gap_sweep)

SUBCOMMANDS = ("decompose", "feasibility", "steady", "solve", "turnpike",
               "sweep", "validate")
_STAGE = {name: i for i, name in enumerate(SUBCOMMANDS)}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


class _Writer:
    """Serializes artifacts in call order and remembers their digests."""

    def __init__(self, outdir):
        self.outdir = outdir
        self.files = {}
        os.makedirs(outdir, exist_ok=True)

    def _put(self, name, text):
        data = text.encode("utf-8")
        with open(os.path.join(self.outdir, name), "wb") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name, obj):
        self._put(name, json.dumps(_clean(obj), indent=2, sort_keys=True,
                                   allow_nan=False) + "\n")

    def table(self, name, header, rows, sep=","):
        lines = [sep.join(header)]
        lines += [sep.join(format(float(v), ".17g") for v in row) for row in rows]
        self._put(name, "\n".join(lines) + "\n")


def _tag(T):
    return format(T, "g")


def _header(n, m, psi=True):
    cols = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{j + 1}" for j in range(m)]
    if psi:
        cols += [f"psi_{i + 1}" for i in range(n)]
    return cols


class Pipeline:
    def __init__(self, cfg, writer, seed):
        self.cfg = cfg
        self.out = writer
        self.seed = seed
        self.summary = {}

    def run(self, command):
        cfg = self.cfg
        stage = _STAGE[command]
        tol = cfg.tolerances
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            dec = decompose(cfg.system, tol["rank_tol"])
        dec_dict = dec.to_dict()
        dec_dict["warnings"] = [str(w.message) for w in caught]
        self.out.json("decomposition.json", dec_dict)
        self.dec = dec
        if stage == 0:
            return 0

        spaces = build_spaces(dec, cfg.system.b, tol["tol_a1"], tol["stab_tol"])
        certs = [certify(spaces, dec.P2, x, tol["tol_feas"])
                 for x in cfg.initial_states]
        for i, cert in enumerate(certs):
            d = cert.to_dict()
            d["c"] = spaces.c.tolist()
            d["verdict"] = "feasible" if cert.feasible else "infeasible"
            self.out.json(f"certificate_{i}.json", d)
        self.summary["feasible"] = [c.feasible for c in certs]
        if not any(c.feasible for c in certs):
            raise FeasibilityError("no configured initial state is feasible")
        if stage == 1:
            return 0

        disc = cfg.discretization
        steadies = []
        for i, cert in enumerate(certs):
            st = solve_steady(cfg.system, dec, cfg.cost, spaces, cert,
                              tol=disc["tol_newton"], max_iter=100,
                              tol_kkt=tol["tol_kkt"],
                              allow_infeasible=not cert.feasible)
            steadies.append(st)
            d = st.to_dict()
            d["feasible"] = cert.feasible
            if cert.feasible:
                self.out.json(f"steady_{i}.json", d)
        if stage == 2:
            return 0
        self.spaces, self.certs, self.steadies = spaces, certs, steadies
        if command == "solve":
            return self._solve()
        if command == "turnpike":
            return self._turnpike()
        if command == "sweep":
            return self._sweep()
        return self._validate()

    def _grid(self, T):
        return Grid.per_unit(T, self.cfg.discretization["N_per_unit"])

    def _newton(self):
        d = self.cfg.discretization
        return d["tol_newton"], d["max_iter"]

    def _solve(self):
        cfg = self.cfg
        n, m = cfg.system.n, cfg.system.m
        for i, x in enumerate(cfg.initial_states):
            for T in cfg.horizons:
                traj = solve_lc(cfg.system, cfg.cost, x, self._grid(T),
                                *self._newton())
                self.out.table(f"trajectory_{i}_{_tag(T)}.csv",
                               _header(n, m), traj.rows())
        return 0

    def _turnpike(self):
        cfg = self.cfg
        n, m = cfg.system.n, cfg.system.m
        for i, x in enumerate(cfg.initial_states):
            st, cert = self.steadies[i], self.certs[i]
            records = []
            for T in cfg.horizons:
                traj = solve_lc(cfg.system, cfg.cost, x, self._grid(T),
                                *self._newton())
                rec = analyze_trajectory(traj, st)
                records.append(rec)
                self.out.table(f"trajectory_{i}_{_tag(T)}.csv",
                               _header(n, m), traj.rows())
                dev_x, dev_u = deviation_series(traj, st)
                t = traj.times
                env = np.full_like(t, np.nan)
                if rec.fit_x is not None and math.isfinite(rec.fit_x.lam):
                    lam = rec.fit_x.lam
                    env = rec.fit_x.K * (np.exp(-lam * t) + np.exp(-lam * (T - t)))
                self.out.table(f"deviation_{i}_{_tag(T)}.csv",
                               ["t", "dev_x", "dev_u"],
                               np.column_stack([t, dev_x, dev_u]))
                self.out.table(f"plot_{i}_{_tag(T)}.dat",
                               ["#t", "dev_x", "dev_u", "envelope"],
                               np.column_stack([t, dev_x, dev_u, env]), sep=" ")
            rep = TurnpikeReport(v_star=st.v_star, records=records,
                                 feasible=cert.feasible)
            self._report(i, rep, cert)
        return 0

    def _sweep(self):
        cfg = self.cfg
        for i, x in enumerate(cfg.initial_states):
            st, cert = self.steadies[i], self.certs[i]
            tol_n, it = self._newton()
            rep = value_gap_sweep(cfg.system, cfg.cost, x, st, cfg.horizons,
                                  cfg.discretization["N_per_unit"], tol_n, it,
                                  feasible=cert.feasible)
            self._report(i, rep, cert)
        return 0

    def _report(self, i, rep, cert):
        d = rep.to_dict()
        d["initial_state"] = self.cfg.initial_states[i].tolist()
        d["certificate"] = "feasible" if cert.feasible else "infeasible"
        d["slope_matches_v_star"] = rep.slope_matches() if rep.slope is not None else None
        self.out.json(f"report_{i}.json", d)

    def _validate(self):
        cfg = self.cfg
        sys, cost, dec = cfg.system, cfg.cost, self.dec
        checks = {}
        a2, min_eig = check_a2(cost, seed=self.seed)
        checks["a2"] = {"pass": a2, "min_eig": min_eig}
        radius = 1.0 + max(float(np.linalg.norm(x)) for x in cfg.initial_states)
        a3, ratio = check_a3(cost, radius, seed=self.seed)
        checks["a3"] = {"pass": a3, "sup_ratio": ratio}
        T = cfg.horizons[0] if cfg.horizons else 10.0
        grid = self._grid(T)
        per_state = []
        for i, x in enumerate(cfg.initial_states):
            if not self.certs[i].feasible:
                continue
            st = self.steadies[i]
            entry = {"index": i, "kkt_residual": st.kkt_residual,
                     "kkt_pass": st.kkt_residual <= cfg.tolerances["tol_kkt"]}
            traj = solve_lc(sys, cost, x, grid, *self._newton())
            adj, stat = pmp_residual(sys, cost, traj)
            entry["pmp"] = {"adjoint": adj, "stationarity": stat}
            i1 = int(round(0.125 * grid.N))
            i2 = int(round(0.875 * grid.N))
            res = lemma_identity_residual(sys, dec, cost, st, traj,
                                          grid.times[i1], grid.times[i2])
            entry["identity_residual"] = res
            entry["identity_pass"] = res <= 1e-6
            if isinstance(cost, QuadraticCost):
                xs, us, _, _ = qp_oracle_steady(sys, dec, cost, st.y2_star)
                err = float(np.linalg.norm(xs - st.x_star)
                            + np.linalg.norm(us - st.u_star))
                scale = 1.0 + float(np.linalg.norm(np.concatenate([xs, us])))
                entry["qp_oracle"] = {"error": err, "pass": err <= 1e-7 * scale}
                ref = riccati_lq_oracle(sys, cost, x, grid)
                gap = float(np.max(np.abs(ref.X - traj.X)))
                entry["riccati_oracle"] = {
                    "sup_state_error": gap,
                    "cost_rel_error": abs(ref.cost - traj.cost) / max(1.0, abs(ref.cost)),
                    "pass": gap <= 1e-3}
            if dec.k > 0 and hautus_controllable(dec.A11, dec.B1):
                F = pole_place_feedback(dec.A11, dec.B1, 0.5)
                sub = suboptimal_feedback_run(sys, dec, cost, st, F, x, grid)
                entry["upper_bound"] = {
                    "suboptimal_cost": sub.cost, "optimal_cost": traj.cost,
                    "pass": traj.cost <= sub.cost + 1e-8 * (1 + abs(sub.cost))}
            per_state.append(entry)
        checks["states"] = per_state
        flags = [a2, a3] + [e["kkt_pass"] and e["identity_pass"] for e in per_state]
        flags += [e[key]["pass"] for e in per_state
                  for key in ("qp_oracle", "riccati_oracle", "upper_bound")
                  if key in e]
        ok = all(flags)
        checks["all_pass"] = bool(ok)
        self.out.json("validation.json", checks)
        if not ok:
            raise ConsistencyError("validation checks failed; see validation.json")
        return 0


def _build_parser():
    p = argparse.ArgumentParser(prog="lcturnpike",
                                description="partial turnpike analysis pipeline")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--output", default=None,
                        help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, default=None)
    return p


def _error_payload(exc, code):
    d = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        d.update(field=exc.field, line=exc.line, column=exc.column)
    history = getattr(exc, "history", None)
    if history:
        d["residual_history"] = list(history)
    return d


def main(argv=None):
    args = _build_parser().parse_args(argv)
    outdir = args.output
    writer = None
    try:
        cfg = load_config(args.config)
        outdir = outdir or cfg.output_dir
        writer = _Writer(outdir)
        seed = cfg.seed if args.seed is None else args.seed
        code = Pipeline(cfg, writer, seed).run(args.command)
    except TurnpikeError as exc:
        code = exc.exit_code
        writer = writer or _Writer(outdir or "out")
        writer.json("error.json", _error_payload(exc, code))
        print(f"error: {exc}", file=_sys.stderr)
    except Exception as exc:  # unexpected failures still leave a record
        code = 1
        writer = writer or _Writer(outdir or "out")
        writer.json("error.json", _error_payload(exc, code))
        print(f"error: {type(exc).__name__}: {exc}", file=_sys.stderr)
    manifest = {"tool": "lcturnpike", "version": __version__,
                "command": args.command, "exit_code": code,
                "config": os.path.basename(args.config),
                "config_sha256": _file_sha(args.config),
                "outputs": dict(sorted(writer.files.items()))}
    writer.json("manifest.json", manifest)
    return code


def _file_sha(path):
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError:
        return None


if __name__ == "__main__":
    raise SystemExit(main())
