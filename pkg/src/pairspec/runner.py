"""Orchestration of a run: report assembly and curve files.

Numbers in the report are ``{"value": x, "err": e}`` where ``e`` is an
error estimate or the string ``"exact"``.  Nothing time-dependent enters
the report, so identical configs give byte-identical files; wall-clock
timings go to a separate ``timing.json``.
"""

import json
import math
import time
import warnings
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from . import density as dens
from . import dispersion as disp
from . import oracle as orc
from . import spectrum
from .config import RunConfig, build_density, build_vector
from .errors import PairspecError

SCHEMA = "pairspec.report/1"
COMMANDS = ("validate", "analyze", "dispersion", "oracle", "witness")


def num(value, err) -> Dict[str, Any]:
    if value is None:
        return None
    v = float(value)
    if err == "exact":
        return {"value": v, "err": "exact"}
    return {"value": v, "err": float(err)}


def fmt(x) -> str:
    return format(float(x), ".17g")


class _Stage:
    """Remembers which module operation is running, for error provenance."""

    def __init__(self):
        self.name = "config"

    def __call__(self, name):
        self.name = name
        return self


def _error_record(exc: BaseException, stage: _Stage) -> Dict[str, Any]:
    module, _, operation = stage.name.partition(".")
    return {
        "type": type(exc).__name__,
        "message": str(exc),
        "module": module,
        "operation": operation,
    }


class Run:
    def __init__(self, cfg: RunConfig, command: str = "analyze"):
        if command not in COMMANDS:
            raise ValueError(f"unknown command {command!r}")
        self.cfg = cfg
        self.command = command
        self.stage = _Stage()
        self.timing: Dict[str, float] = {}
        self.files: List[str] = []
        self.density = build_density(cfg)
        self.vector = build_vector(cfg, self.density) if cfg.vector else None
        self._cc = None

    # -------------------------------------------------------------- pieces

    def _timed(self, key, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.timing[key] = self.timing.get(key, 0.0) + time.perf_counter() - t0

    @property
    def couplings(self) -> disp.CriticalCouplings:
        if self._cc is None:
            self.stage("dispersion.critical_couplings")
            self._cc = self._timed(
                "critical_couplings", disp.critical_couplings, self.density, self.cfg.rel_tol
            )
        return self._cc

    def resolve(self, entry) -> float:
        if isinstance(entry, str):
            return getattr(self.couplings, entry)
        return float(entry)

    def density_section(self):
        d = self.density
        self.stage("density.moment")
        one = dens.moment_with_error(d, "one", rel_tol=self.cfg.rel_tol)
        return {
            "label": d.label,
            "tabulated": d.tabulated,
            "e0": num(d.e0, "exact"),
            "g_norm_sq": num(one.value, one.abs_err),
        }

    def validation_section(self):
        self.stage("density.validate_assumptions")
        rep = self._timed("validation", dens.validate_assumptions, self.density)
        return {
            "passed": rep.passed,
            "failed": rep.failed(),
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "witness": num(c.witness, "exact") if math.isfinite(c.witness) else None,
                    "where": None if c.where is None else num(c.where, "exact"),
                    "detail": c.detail,
                }
                for c in rep.checks
            ],
        }

    def couplings_section(self):
        cc = self.couplings
        return {
            "lambda_c": num(cc.lambda_c, cc.lambda_c_err),
            "lambda_c0": num(cc.lambda_c0, cc.lambda_c0_err),
            "lambda_T": num(cc.lambda_T, cc.lambda_T_err),
        }

    def _one_lambda(self, lam: float) -> Dict[str, Any]:
        d, cc, cfg = self.density, self.couplings, self.cfg
        self.stage("spectrum.classify")
        tol = cfg.rel_tol
        desc = spectrum.classify(
            d, lam, eta=cfg.eta, gv=self.vector, n_report=cfg.n_report, cc=cc, rel_tol=tol
        )
        out: Dict[str, Any] = {"status": "ok", "regime": desc.regime}
        eg_err = desc.e_g_err if desc.e_g_err is not None else 0.0
        out["e_g"] = None if desc.e_g is None else num(desc.e_g, "exact" if lam == 0.0 else eg_err)
        bound_err = eg_err
        out["x0"] = out["beta"] = out["ub_norm"] = None
        out["e_b"] = num(0.0, "exact") if desc.regime == spectrum.SUPERCRITICAL else None
        if desc.regime == spectrum.BOUND:
            self.stage("spectrum.bound_state")
            bs = spectrum.bound_state(d, lam, cc=cc, rel_tol=tol)
            self.stage("dispersion.eval_D")
            resid = disp.eval_D(d, lam, bs.x0, tol).value.real
            slope = disp.eval_D_prime(d, lam, bs.x0, tol).value.real
            x0_err = abs(resid / slope)
            e_b_err = abs(bs.e_b - bs.e_b_unsimplified)
            out["x0"] = num(bs.x0, x0_err)
            out["beta"] = num(bs.beta, x0_err / (2.0 * bs.beta))
            out["e_b"] = num(bs.e_b, e_b_err)
            out["ub_norm"] = num(bs.ub_norm, abs(bs.ub_norm - 1.0))
            bound_err = eg_err + e_b_err
        if desc.regime in (spectrum.SUPERCRITICAL, spectrum.BOUND) and lam != 0.0:
            self.stage("spectrum.hs_trace")
            hs = spectrum.hs_trace_with_error(d, lam, False, cc=cc, rel_tol=tol)
            out["hs_norm_sq"] = num(hs.value, hs.abs_err)
            self.stage("dispersion.delta_inf")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", disp.NearCriticalWarning)
                fine = disp.delta_inf(d, lam, n_grid=512, rel_tol=tol, cc=cc)
                coarse = disp.delta_inf(d, lam, n_grid=256, rel_tol=tol, cc=cc)
            out["delta"] = num(fine, abs(fine - coarse))
        elif lam == 0.0:
            out["hs_norm_sq"] = num(0.0, "exact")
            out["delta"] = num(1.0, "exact")
        else:
            out["hs_norm_sq"] = out["delta"] = None
        if desc.regime in (spectrum.UNBOUNDED, spectrum.CRITICAL_C) or desc.whole_line:
            out["shift"] = None
        elif cfg.eta == 0.0:
            out["shift"] = num(0.0, "exact")
        else:
            out["shift"] = num(desc.shift, cfg.rel_tol * abs(desc.shift))
        out["kappa"] = None if desc.kappa is None else num(desc.kappa, cfg.rel_tol)
        out["point_spectrum"] = [num(p, bound_err) for p in desc.point_spectrum]
        out["ac_start"] = None if desc.ac_start is None else num(desc.ac_start, bound_err)
        out["sc_empty"] = desc.sc_empty
        out["whole_line"] = desc.whole_line
        out["bounded_below"] = desc.bounded_below
        out["bounded_above"] = desc.bounded_above
        out["notes"] = list(desc.notes)
        return out

    def lambda_sweep(self):
        entries = []
        for raw in self.cfg.lambdas:
            lam = self.resolve(raw)
            rec: Dict[str, Any] = {"lambda": num(lam, "exact"), "input": raw}
            try:
                rec.update(self._timed(f"lambda={lam!r}", self._one_lambda, lam))
            except (PairspecError, ArithmeticError, ValueError) as exc:
                rec.update(status="error", error=_error_record(exc, self.stage))
            entries.append((lam, rec))
        entries.sort(key=lambda t: t[0])
        return [rec for _, rec in entries]

    # -------------------------------------------------------------- oracle

    def _mode_summary(self, m: orc.DiscreteModel, lam: float):
        dense, secular = orc.normal_mode_squares(m, lam)
        nu = orc.normal_modes(m, lam)
        spread = float(np.sum(np.abs(np.sqrt(np.maximum(dense, 0)) - np.sqrt(np.maximum(secular, 0)))))
        e_disc = 0.5 * float(np.sum(nu - m.omega))
        pair = orc.bogoliubov_pair(m, lam)
        return nu, e_disc, spread, pair

    def oracle_section(self):
        cfg = self.cfg.oracle
        if cfg.omega is not None:
            return self._explicit_oracle()
        rows = []
        targets = []
        for raw in self.cfg.lambdas:
            lam = self.resolve(raw)
            if lam == 0.0:
                continue
            self.stage("spectrum.classify")
            desc = spectrum.classify(self.density, lam, cc=self.couplings, rel_tol=self.cfg.rel_tol)
            if desc.regime in (spectrum.SUPERCRITICAL, spectrum.BOUND):
                # the discrete ground energy is the bottom of the spectrum, E_g - E_b
                targets.append((lam, desc.point_spectrum[0], desc.beta))
        targets.sort()
        models = []
        for n in cfg.n:
            self.stage("oracle.discretize")
            m = self._timed(f"discretize N={n}", orc.discretize, self.density, n, cfg.rule)
            models.append(
                {
                    "n": n,
                    "g_norm_sq_disc": num(m.g_norm_sq, "exact"),
                    "lambda_c0_disc": num(m.lambda_c0, "exact"),
                    "omega_max": num(m.omega[-1], "exact"),
                }
            )
            for lam, eg, beta in targets:
                rec: Dict[str, Any] = {"n": n, "lambda": num(lam, "exact"), "status": "ok"}
                try:
                    self.stage("oracle.normal_modes")
                    nu, e_disc, spread, pair = self._timed(
                        f"oracle N={n}", self._mode_summary, m, lam
                    )
                except (PairspecError, ArithmeticError, ValueError) as exc:
                    rec.update(status="error", error=_error_record(exc, self.stage))
                    rows.append(rec)
                    continue
                rec["e_g_disc"] = num(e_disc, spread)
                rec["ground_rel_err"] = num(abs(e_disc - eg) / max(abs(eg), 1e-6), "exact")
                rec["beta_disc"] = None
                rec["beta_rel_err"] = None
                if beta is not None:
                    rec["beta_disc"] = num(nu[0], spread)
                    rec["beta_rel_err"] = num(abs(nu[0] - beta) / beta, "exact")
                rec["residuals"] = [num(r, "exact") for r in pair.residuals]
                rec["hs_norm_sq_disc"] = num(pair.hs_norm_sq, "exact")
                rows.append(rec)
        return {
            "source": "density",
            "rule": cfg.rule,
            "models": models,
            "rows": rows,
        }

    def _explicit_oracle(self):
        cfg = self.cfg.oracle
        m = orc.DiscreteModel(cfg.omega, cfg.g, source="config")
        rows = []
        fock_rows = []
        lams = sorted(self.resolve_discrete(raw, m) for raw in self.cfg.lambdas)
        for lam in lams:
            rec: Dict[str, Any] = {"lambda": num(lam, "exact"), "status": "ok"}
            try:
                self.stage("oracle.normal_modes")
                nu, e_disc, spread, pair = self._mode_summary(m, lam)
                rec["nu"] = [num(v, spread) for v in nu]
                rec["e_g_disc"] = num(e_disc, spread)
                rec["residuals"] = [num(r, "exact") for r in pair.residuals]
                if cfg.n_c > 0:
                    self.stage("oracle.fock_diagonalize")
                    fr = self._timed(
                        "fock", orc.fock_diagonalize, m, lam, cfg.n_c, dim_cap=cfg.dim_cap
                    )
                    rec["fock"] = {
                        "n_c": fr.n_c,
                        "dim": fr.dim,
                        "cutoff_dependent": fr.cutoff_dependent,
                        "eigenvalues": [num(v, "exact") for v in fr.eigenvalues],
                    }
                    fock_rows.extend((lam, k, v) for k, v in enumerate(fr.eigenvalues))
            except (PairspecError, ArithmeticError, ValueError) as exc:
                rec.update(status="error", error=_error_record(exc, self.stage))
            rows.append(rec)
        self._fock_rows = fock_rows
        return {
            "source": "explicit",
            "n_modes": m.n,
            "g_norm_sq": num(m.g_norm_sq, "exact"),
            "lambda_c0_disc": num(m.lambda_c0, "exact"),
            "rows": rows,
        }

    def resolve_discrete(self, raw, m: orc.DiscreteModel) -> float:
        if raw == "lambda_c0":
            return m.lambda_c0
        return self.resolve(raw)

    # -------------------------------------------------------------- witness

    def witness_lambda(self) -> float:
        wc = self.cfg.witness
        if wc.lam is not None:
            return wc.lam
        lams = [self.resolve(raw) for raw in self.cfg.lambdas]
        below = [x for x in lams if x < self.couplings.lambda_c0]
        return min(below) if below else min(lams)

    def witness_section(self):
        wc = self.cfg.witness
        lam = self.witness_lambda()
        self.stage("spectrum.witness_scan")
        c_best, d_best, e_best = spectrum.witness_scan(self.density, lam)
        delta = wc.delta if wc.delta is not None else d_best
        eps = wc.eps if wc.eps is not None else e_best
        self.stage("spectrum.unboundedness_witness")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spectrum.WitnessParameterWarning)
            series = self._timed(
                "witness", spectrum.unboundedness_witness, self.density, lam, delta, eps, wc.n_max
            )
        k = int(np.argmin(series.rayleigh))
        self._witness = series
        return {
            "lambda": num(lam, "exact"),
            "scan_min_c_lambda": num(c_best, self.cfg.rel_tol * abs(c_best)),
            "scan_argmin": {"delta": num(d_best, "exact"), "eps": num(e_best, "exact")},
            "delta": num(delta, "exact"),
            "eps": num(eps, "exact"),
            "c_lambda": num(series.c_lambda, self.cfg.rel_tol * abs(series.c_lambda)),
            "n_max": wc.n_max,
            "min_rayleigh": num(series.rayleigh[k], self.cfg.rel_tol * abs(series.rayleigh[k])),
            "argmin_n": k,
            "last_rayleigh": num(series.rayleigh[-1], self.cfg.rel_tol * abs(series.rayleigh[-1])),
        }

    # -------------------------------------------------------------- curves

    def s_grid(self):
        dc = self.cfg.dispersion
        return np.concatenate(([0.0], np.geomspace(dc.s_min, dc.s_max, dc.n_s - 1)))

    def dispersion_lambda(self) -> float:
        if self.cfg.dispersion.lam is not None:
            return self.cfg.dispersion.lam
        return self.resolve(self.cfg.lambdas[0])

    def write_dpm(self, out: Path):
        d, lam = self.density, self.dispersion_lambda()
        s = self.s_grid()
        self.stage("dispersion.hilbert_on_cut")
        h, herr = self._timed("dpm", disp.hilbert_on_cut, d, s, self.cfg.rel_tol)
        path = out / "dpm.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("s,ReD,ImD+,Hphi,err\n")
            for si, hi, ei in zip(s, h, herr):
                bp = disp._pair(d, lam, float(si), float(hi), float(ei))
                fh.write(",".join(fmt(x) for x in (si, bp.d_plus.real, bp.d_plus.imag, hi, bp.abs_err)))
                fh.write("\n")
        self.files.append(path.name)
        return lam

    def write_spectrum(self, out: Path, results):
        cc = self.couplings
        path = out / "spectrum.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("lambda,kind,n,value,err\n")
            for kind in ("lambda_c0", "lambda_c"):
                fh.write(f",{kind},0,{fmt(getattr(cc, kind))},{fmt(getattr(cc, kind + '_err'))}\n")
            for rec in results:
                if rec["status"] != "ok":
                    continue
                lam = fmt(rec["lambda"]["value"])
                for n, p in enumerate(rec["point_spectrum"]):
                    kind = "ladder" if rec["regime"] == spectrum.BOUND else "ground"
                    fh.write(f"{lam},{kind},{n},{fmt(p['value'])},{fmt(p['err'])}\n")
                if rec["ac_start"] is not None:
                    a = rec["ac_start"]
                    fh.write(f"{lam},ac_start,0,{fmt(a['value'])},{fmt(a['err'])}\n")
        self.files.append(path.name)

    def write_witness(self, out: Path):
        path = out / "witness.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("N,rayleigh\n")
            for n, q in self._witness.sample(self.cfg.witness.rows):
                fh.write(f"{n},{fmt(q)}\n")
        self.files.append(path.name)

    def write_fock(self, out: Path):
        path = out / "fock.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("lambda,k,eigenvalue\n")
            for lam, k, v in self._fock_rows:
                fh.write(f"{fmt(lam)},{k},{fmt(v)}\n")
        self.files.append(path.name)

    # -------------------------------------------------------------- driver

    def execute(self, out_dir: Optional[Path] = None) -> Dict[str, Any]:
        cfg, cmd = self.cfg, self.command
        out = Path(out_dir if out_dir is not None else Path(cfg.base_dir) / cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report: Dict[str, Any] = {
            "schema": SCHEMA,
            "version": __version__,
            "command": cmd,
            "config": cfg.echo(),
            "density": self.density_section(),
        }
        if cmd in ("validate", "analyze"):
            report["validation"] = self.validation_section()
        if cmd != "validate":
            report["couplings"] = self.couplings_section()
        if cmd == "analyze":
            results = self.lambda_sweep()
            report["results"] = results
            if cfg.oracle.enabled:
                report["oracle"] = self.oracle_section()
            if cfg.witness.enabled:
                report["witness"] = self.witness_section()
            if cfg.curves:
                report["dpm_lambda"] = num(self.write_dpm(out), "exact")
                self.write_spectrum(out, results)
                if cfg.witness.enabled:
                    self.write_witness(out)
        elif cmd == "dispersion":
            report["dpm_lambda"] = num(self.write_dpm(out), "exact")
        elif cmd == "oracle":
            report["oracle"] = self.oracle_section()
            if getattr(self, "_fock_rows", None):
                self.write_fock(out)
        elif cmd == "witness":
            report["witness"] = self.witness_section()
            self.write_witness(out)
        report["files"] = sorted(self.files + ["report.json"])
        write_json(out / "report.json", report)
        write_json(out / "timing.json", {k: round(v, 6) for k, v in sorted(self.timing.items())})
        return report


def write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, allow_nan=False)
        fh.write("\n")


def run(cfg: RunConfig, command: str = "analyze", out_dir: Optional[Path] = None) -> Dict[str, Any]:
    """Execute one subcommand and write report.json plus curve files."""
    return Run(cfg, command).execute(out_dir)
