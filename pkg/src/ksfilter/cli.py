"""Command-line harness for rate studies and the fast validation suite.

Usage::

    ksfilter --config experiment.ini [--seed N] [--out DIR] [--workers N]
             [--strict-guard] [--validate-only]

The config file is UTF-8 ``key = value`` lines (an optional ``[section]``
header is ignored).  Exit codes: 0 success, 1 unreadable or invalid config
(or a failed validation item), 2 strict mesh guard rejected a mesh, 3 the
inner Monte Carlo noise floor left a rate study unresolved.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import io
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import functionals as fn
from .errors import GuardError
from .estimator import estimate_conditional, lp_error_study
from .model import (TEST_FUNCTIONS, bounded_model, check_derivatives, const_model, linear_model)
from .paths import (Partition, exp_moment_bound_check, interval_increments, refine_bundle,
                    sample_bundle, sample_observation)
from .reference import kalman_bucy

log = logging.getLogger("ksfilter")

CSV_HEADER = ["scheme", "delta", "p", "n_outer", "n_inner", "lp_error", "lp_stderr",
              "slope", "slope_lo", "slope_hi", "guard_ok", "runtime_s"]

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_UNRESOLVED = 0, 1, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    model: str = "BOUNDED"
    phi: str = "x"
    t: float = 1.0
    meshes: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    M: int = 8
    p: float = 2.0
    guard_p: Optional[float] = None
    n_outer: int = 16
    n_inner: int = 200_000
    master_seed: int = 20240101
    schemes: List[str] = field(default_factory=lambda: ["order2", "picard1"])
    strict_guard: bool = False
    output_dir: str = "results"
    workers: int = 1
    n_boot: int = 1000
    record_runtime: bool = False
    # model parameters (LINEAR / CONST)
    a: float = -1.0
    sigma: float = 1.0
    c: float = 1.0
    m0: float = 0.0
    P0: float = 1.0

    def validate(self):
        if self.model.upper() not in ("LINEAR", "BOUNDED", "CONST"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.phi not in TEST_FUNCTIONS:
            raise ConfigError(f"unknown phi {self.phi!r}; choose from {sorted(TEST_FUNCTIONS)}")
        if not self.meshes:
            raise ConfigError("meshes must not be empty")
        if any(b >= a for a, b in zip(self.meshes, self.meshes[1:])):
            raise ConfigError("meshes must be strictly decreasing")
        for d in self.meshes:
            n = self.t / d
            if d <= 0 or abs(n - round(n)) > 1e-12 * max(1.0, n):
                raise ConfigError(f"horizon {self.t} is not a multiple of mesh {d}")
        if self.n_inner < 2 or self.n_outer < 2:
            raise ConfigError("n_inner and n_outer must be >= 2")
        if self.M < 1:
            raise ConfigError("refinement M must be >= 1")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        for s in self.schemes:
            if s not in (fn.PICARD1, fn.ORDER2):
                raise ConfigError(f"unknown scheme {s!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def build_model(self):
        name = self.model.upper()
        if name == "LINEAR":
            return linear_model(self.a, self.sigma, self.c, self.m0, self.P0)
        if name == "CONST":
            return const_model(self.c, self.a, self.sigma, self.m0, self.P0)
        return bounded_model()

    def partitions(self):
        return [Partition.uniform(self.t, d) for d in self.meshes]


_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def _coerce(name, raw, default):
    raw = raw.strip()
    try:
        if name == "guard_p":
            return None if raw.lower() in ("", "none") else float(raw)
        if isinstance(default, bool):
            return _BOOL[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = [x.strip() for x in raw.replace(";", ",").split(",") if x.strip()]
            return [float(x) for x in items] if name == "meshes" else items
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        if not text.lstrip().startswith("["):
            text = "[experiment]\n" + text
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = ExperimentConfig()
    known = {f for f in cfg.__dataclass_fields__}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, _coerce(key, raw, getattr(cfg, key)))
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# --------------------------------------------------------------------------
# outputs


def _num(x):
    return "" if x is None else repr(float(x))


def results_rows(cfg: ExperimentConfig, study, runtime=None):
    rows = []
    runtime_s = _num(runtime) if cfg.record_runtime and runtime is not None else ""
    for quantity, suffix in (("rho", ""), ("pi", "_pi")):
        for scheme in cfg.schemes:
            rep = study.report(scheme, quantity)
            label = scheme + suffix
            # nominal meshes from the config; partition gaps carry rounding noise
            for k, d in enumerate(cfg.meshes):
                rows.append([label, _num(d), _num(cfg.p), str(cfg.n_outer), str(cfg.n_inner),
                             _num(rep.lp_error[k]), _num(rep.lp_stderr[k]), "", "", "",
                             str(rep.guard_ok[k]).lower(), ""])
            fit = rep.fit
            rows.append([label, "", _num(cfg.p), str(cfg.n_outer), str(cfg.n_inner), "", "",
                         _num(fit.slope) if fit else "", _num(fit.slope_lo) if fit else "",
                         _num(fit.slope_hi) if fit else "", "", runtime_s])
    return rows


def write_results(path, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def format_report(cfg, study, guard, runtime, flags):
    lines = [f"ksfilter report  {_dt.datetime.now().isoformat(timespec='seconds')}", ""]
    lines.append(f"model={cfg.model} phi={cfg.phi} t={cfg.t:g} p={cfg.p:g} M={cfg.M} "
                 f"n_outer={cfg.n_outer} n_inner={cfg.n_inner} seed={cfg.master_seed}")
    lines.append("")
    lines.append("mesh guard (delta0 = 1/(2 p ||Lh|| sqrt(d_Y d_V))):")
    for v in guard:
        lines.append(f"  delta={v.delta:<8g} delta0={v.delta0:<10g} ok={v.ok} ||Lh|| {v.lh_bound_flag}")
    if study is None:
        lines.append("")
        lines.append("strict guard rejected a mesh; no study was run")
        return "\n".join(lines) + "\n"
    for quantity in ("rho", "pi"):
        for scheme in cfg.schemes:
            rep = study.report(scheme, quantity)
            lines.append("")
            lines.append(f"[{scheme}] {quantity} error, L_{cfg.p:g} over {rep.n_outer} observation paths")
            lines.append(f"  {'delta':>8} {'L_p error':>12} {'bootstrap se':>13} {'inner se':>11}")
            for k, d in enumerate(rep.deltas):
                lines.append(f"  {d:8.4g} {rep.lp_error[k]:12.4e} {rep.lp_stderr[k]:13.3e} "
                             f"{rep.inner_stderr[k]:11.3e}")
            if rep.exact:
                dmax = np.max(np.abs(study.d_rho[scheme] if quantity == "rho" else study.d_pi[scheme]))
                lines.append(f"  slope: exact (max |d_{quantity}| = {dmax:.3e} <= 1e-12 scale)")
            elif rep.fit is not None:
                lines.append(f"  slope: {rep.fit.slope:.3f}  95% CI [{rep.fit.slope_lo:.3f}, "
                             f"{rep.fit.slope_hi:.3f}]")
            if rep.unresolved:
                lines.append("  UNRESOLVED: inner standard error >= 1/3 of the L_p error at the finest mesh")
    lines.append("")
    lines.append(f"runtime: {runtime:.1f} s")
    if flags:
        lines.append("flags: " + ", ".join(flags))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# run / validate


def run(cfg: ExperimentConfig) -> int:
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model()
    phi = TEST_FUNCTIONS[cfg.phi]
    guard_p = cfg.p if cfg.guard_p is None else cfg.guard_p
    guard = [fn.mesh_guard(guard_p, model, d) for d in cfg.meshes]
    if cfg.strict_guard and not all(v.ok for v in guard):
        (out / "report.txt").write_text(format_report(cfg, None, guard, 0.0, ["GUARD"]), encoding="utf-8")
        bad = [v for v in guard if not v.ok][0]
        print(f"strict guard: mesh {bad.delta:g} >= delta0 {bad.delta0:g}", file=sys.stderr)
        return EXIT_GUARD
    t0 = time.perf_counter()
    study = lp_error_study(model, phi, cfg.p, cfg.partitions(), cfg.n_outer, cfg.n_inner, cfg.M,
                           schemes=tuple(cfg.schemes), master_seed=cfg.master_seed,
                           workers=cfg.workers, guard_p=guard_p, n_boot=cfg.n_boot)
    runtime = time.perf_counter() - t0
    write_results(out / "results.csv", results_rows(cfg, study, runtime))
    flags = ["UNRESOLVED"] if study.unresolved else []
    report = format_report(cfg, study, guard, runtime, flags)
    (out / "report.txt").write_text(report, encoding="utf-8")
    print(report, end="")
    return EXIT_UNRESOLVED if study.unresolved else EXIT_OK


@dataclass
class Diagnostic:
    name: str
    status: str  # PASS, FAIL or WARN
    detail: str = ""


def _within(est, target, se, k=3.0):
    return abs(est - target) <= k * se


def validate(cfg: ExperimentConfig, model=None, n: int = 10**4, verbose: bool = True) -> List[Diagnostic]:
    """Fast invariant suite at reduced sample sizes; one Diagnostic per item."""
    model = cfg.build_model() if model is None else model
    seed = cfg.master_seed
    diags = []

    def item(name, ok, detail="", warn=False):
        diags.append(Diagnostic(name, "WARN" if warn else ("PASS" if ok else "FAIL"), detail))

    res = check_derivatives(model, np.random.default_rng(seed))
    item("derivative consistency", all(res.values()),
         ", ".join(f"{k}={'ok' if v else 'BAD'}" for k, v in res.items()))

    cm = const_model()
    P = Partition.uniform(1.0, 0.1)
    b = sample_bundle(cm, P, 8, (seed, 1), n_paths=2000)
    o = fn.log_weight_oracle(cm, b).value
    o2 = fn.log_weight_order2(cm, b, P).value
    gap = float(np.max(np.abs(o2 - o) / (1 + np.abs(o))))
    item("constant-sensor exactness", gap <= 1e-12, f"max rel gap {gap:.2e}")

    rng = np.random.default_rng(seed)
    b = sample_bundle(model, Partition.uniform(1.0, 0.1), 8, (seed, 2), n_paths=200)
    worst = 0.0
    for _ in range(3):
        inner = np.sort(rng.choice(np.arange(1, 80), size=6, replace=False)) * b.dt[0]
        part = Partition(np.concatenate([[0.0], b.times[np.rint(inner / b.dt[0]).astype(int)], [1.0]]))
        one = fn.log_weight_order2(model, b, part).value
        lw = fn.log_weight_order2(model, b, Partition(part.points[:2]))
        for k in range(3, len(part) + 1):
            lw = fn.update_recursive(lw, model, b, Partition(part.points[:k]))
        worst = max(worst, float(np.max(np.abs(lw.value - one))))
    item("recursivity", worst <= 1e-13, f"max |incremental - one-shot| {worst:.1e}")

    d = 0.1
    b = sample_bundle(model, Partition([0.0, d]), 64, (seed, 3), n_paths=n)
    inc = interval_increments(b, b.partition)
    dy, A, B = inc.deltaY[:, 0, 1], inc.A[:, 0, 1], inc.B[:, 0, 1, 0]
    checks = [(np.var(dy), d, np.sqrt(2 / n) * d),
              (np.mean(dy * A), d * d / 2, np.std(dy * A) / np.sqrt(n)),
              (np.var(A), d ** 3 / 3, np.sqrt(2 / n) * d ** 3 / 3),
              (np.var(B), d * d / 2, np.std(B * B) / np.sqrt(n))]
    ok = all(_within(e, tgt, se) for e, tgt, se in checks)
    item("increment covariances", ok, " ".join(f"{e:.3g}/{tgt:.3g}" for e, tgt, _ in checks))

    if cfg.M == 1:
        item("refinement consistency", True,
             "M=1 gives zero within-interval integrals; consistency not assessed", warn=True)
    else:
        b = sample_bundle(model, Partition.uniform(1.0, 0.1), cfg.M, (seed, 4), n_paths=1000)
        rms = []
        prev = interval_increments(b, b.partition).B
        for _ in range(3):
            b = refine_bundle(model, b)
            cur = interval_increments(b, b.partition).B
            rms.append(float(np.sqrt(np.mean((cur - prev) ** 2))))
            prev = cur
        item("refinement consistency", rms[0] > rms[1] > rms[2], "B rms diffs " + ", ".join(f"{r:.2e}" for r in rms))

    mc = exp_moment_bound_check(1.0, 0.5, n, 64, seed)
    item("exponential moment bound", mc.passed, f"{mc.estimate:.4f} <= {mc.bound:.4f}")

    bm = bounded_model()
    b = sample_bundle(bm, Partition.uniform(1.0, 0.1), 8, (seed, 5), n_paths=n)
    z = np.exp(fn.log_weight_oracle(bm, b).value)
    se = z.std(ddof=1) / np.sqrt(n)
    item("martingale normalisation", _within(z.mean(), 1.0, se, 4.0), f"E Z = {z.mean():.4f} ± {se:.4f}")

    v = fn.mesh_guard(1.0, bm, 0.5)
    item("mesh guard arithmetic", v.delta0 == 0.5 and not v.ok and fn.mesh_guard(1.0, bm, 0.49).ok,
         f"delta0 = {v.delta0}")

    lm = linear_model()
    part = Partition.uniform(1.0, 0.05)
    hits = 0
    for o in range(4):
        est = estimate_conditional(lm, TEST_FUNCTIONS["x"], (seed, 6, o), part, "order2", max(n, 2), 8)
        times = part.refine(8)
        kb = kalman_bucy(lm, sample_observation(times, 1, (seed, 6, o)), times)
        hits += _within(est.pi_phi, kb.mean[-1], est.std_error_pi_phi)
    item("Kalman-Bucy cross-check", hits >= 3, f"{hits}/4 paths within 3 se")

    if verbose:
        for dg in diags:
            print(f"{dg.status:4}  {dg.name:28} {dg.detail}")
    return diags


def build_parser():
    ap = argparse.ArgumentParser(prog="ksfilter", description=__doc__.splitlines()[0])
    ap.add_argument("--config", metavar="PATH", help="experiment config file")
    ap.add_argument("--seed", type=int, help="master seed (overrides config)")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    ap.add_argument("--workers", type=int, help="worker processes (never changes results)")
    ap.add_argument("--strict-guard", action="store_true", help="reject meshes not below delta0")
    ap.add_argument("--validate-only", action="store_true", help="run the fast invariant suite only")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = replace(cfg, master_seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
        if args.workers is not None:
            cfg = replace(cfg, workers=args.workers)
        if args.strict_guard:
            cfg = replace(cfg, strict_guard=True)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.validate_only:
        diags = validate(cfg)
        return EXIT_OK if all(d.status != "FAIL" for d in diags) else EXIT_CONFIG
    try:
        return run(cfg)
    except GuardError as exc:
        print(f"strict guard: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
