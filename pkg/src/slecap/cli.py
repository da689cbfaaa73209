"""Command-line entry point.

One subcommand per experiment, driven by a RunConfig assembled from an
optional key=value config file and command-line flags (flags win).  Every
run is reproducible from the master seed; reports are written as
<experiment>.report.json and batches optionally as <experiment>.samples.csv.
Only the output directory may come from the environment (SLECAP_OUTPUT_DIR).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, asdict

import numpy as np
from numpy.random import SeedSequence

from . import experiments as xp
from .params import Params
from .sampler import TestSet, musharp_batch

EXPERIMENTS = ("sample", "reversibility", "mu-r", "coupling", "tails",
               "commutation", "density-check", "robustness")

DEFAULTS = {"kappa": 4.0, "x": 1.0, "t0": 1.0, "dt": 1e-4, "N": 2000,
            "seed": 1, "output_dir": ".", "threads": 0, "csv": False}


@dataclass
class RunConfig:
    experiment: str
    kappa: float = 4.0
    x: float = 1.0
    t0: float = 1.0
    dt: float = 1e-4
    N: int = 2000
    seed: int = 1
    output_dir: str = "."
    threads: int = 0
    csv: bool = False
    thresholds: dict = field(default_factory=dict)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not 0.0 < self.kappa < 8.0:
            raise ValueError("constraint violated: kappa must lie in (0, 8)")
        for name in ("x", "t0", "dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"constraint violated: {name} must be positive")
        if self.N <= 0:
            raise ValueError("constraint violated: N must be positive")
        if self.t0 != 1.0 and self.experiment not in ("sample", "density-check"):
            raise ValueError("constraint violated: the statistical experiments fix t0 = 1 "
                             "(scaling reduction)")
        if self.experiment == "commutation" and abs(self.kappa - 8.0 / 3.0) > 1e-9:
            raise ValueError("constraint violated: commutation requires kappa = 8/3 "
                             "(zero central charge)")
        if self.experiment in ("reversibility", "mu-r", "coupling") and self.kappa > 4.0:
            raise ValueError("constraint violated: this experiment requires kappa <= 4")


def parse_config_file(path: str) -> dict:
    """Simple key=value lines; blank lines and #-comments ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = val
    return out


def _coerce(key: str, val):
    if key in ("N", "seed", "threads"):
        return int(val)
    if key in ("kappa", "x", "t0", "dt"):
        return float(val)
    if key == "csv":
        return str(val).lower() in ("1", "true", "yes")
    return val


def emit_csv(values: np.ndarray, meta: dict, path: str):
    """Write one row per sample: meta columns first, then Re/Im per test point.

    Floats are written with repr so parsing the file reproduces them exactly.
    """
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("batch must be a nonempty (n, points) array")
    n, P = values.shape
    meta_cols = []
    for key in sorted(meta):
        col = np.asarray(meta[key])
        if col.ndim == 0:
            col = np.broadcast_to(col, (n,))
        if col.shape[0] != n:
            raise ValueError(f"meta column {key!r} has wrong length")
        meta_cols.append((key, col))
    header = [k for k, _ in meta_cols]
    for j in range(P):
        header += [f"p{j:02d}_re", f"p{j:02d}_im"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            row = [repr(c[i].item()) if hasattr(c[i], "item") else repr(c[i])
                   for _, c in meta_cols]
            for j in range(P):
                row.append(repr(float(values[i, j].real)))
                row.append(repr(float(values[i, j].imag)))
            fh.write(",".join(row) + "\n")


def read_csv(path: str):
    """Parse a file written by emit_csv back into (values, meta)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    pt_cols = [j for j, h in enumerate(header) if h.startswith("p") and
               (h.endswith("_re") or h.endswith("_im"))]
    meta_cols = [j for j in range(len(header)) if j not in pt_cols]
    P = len(pt_cols) // 2
    vals = np.empty((len(rows), P), dtype=np.complex128)
    for i, row in enumerate(rows):
        for j in range(P):
            re = float(row[pt_cols[2 * j]])
            im = float(row[pt_cols[2 * j + 1]])
            vals[i, j] = complex(re, im)
    meta = {header[j]: np.array([_maybe_float(r[j]) for r in rows]) for j in meta_cols}
    return vals, meta


def _maybe_float(s: str):
    try:
        return float(s)
    except ValueError:
        return s


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _sample_run(cfg: RunConfig) -> xp.ExperimentReport:
    p = Params.from_kappa(cfg.kappa)
    vals = musharp_batch(p, 0.0, cfg.x, cfg.t0, cfg.dt, SeedSequence(cfg.seed), cfg.N)
    ts = TestSet.for_params(p)
    stats = {"n": {"value": cfg.N},
             "min_imag": {"value": float(vals.imag.min())},
             "im_floor": {"value": float(np.sqrt(ts.min_imag ** 2 - 2 * p.a * cfg.t0))}}
    verdict = bool(np.all(vals.imag > 0))
    return xp.ExperimentReport(
        name="sample", params={"kappa": cfg.kappa, "x": cfg.x, "t0": cfg.t0,
                               "N": cfg.N, "dt": cfg.dt, "seed": cfg.seed},
        statistics=stats, samples_meta={"N": cfg.N, "dt": cfg.dt, "seeds": 1},
        verdict=verdict, thresholds={}), vals


def run(cfg: RunConfig) -> int:
    """Execute the configured experiment; 0 = pass, 2 = fail verdict, 1 = error."""
    try:
        cfg.validate()
        if cfg.threads > 0:
            import numba
            numba.set_num_threads(cfg.threads)
        out_dir = os.environ.get("SLECAP_OUTPUT_DIR", cfg.output_dir)
        os.makedirs(out_dir, exist_ok=True)
        p = Params.from_kappa(cfg.kappa)
        th = cfg.thresholds or None
        csv_payload = None
        if cfg.experiment == "sample":
            report, vals = _sample_run(cfg)
            csv_payload = (vals, {"seed": cfg.seed, "x1": 0.0, "x2": cfg.x,
                                  "t0": cfg.t0})
        elif cfg.experiment == "reversibility":
            report = xp.reversibility_experiment(p, cfg.x, cfg.N, cfg.dt, cfg.seed, th)
        elif cfg.experiment == "mu-r":
            report = xp.mu_r_constancy_experiment(p, cfg.x, [0.0, 0.25, 0.5, 0.75, 1.0],
                                                  cfg.N, cfg.dt, cfg.seed, th)
        elif cfg.experiment == "coupling":
            N = cfg.N if cfg.N != DEFAULTS["N"] else 4000
            report = xp.coupling_rate_experiment(p, cfg.x, [0.2, 0.1, 0.05, 0.025],
                                                 N, cfg.dt, cfg.seed, th)
        elif cfg.experiment == "tails":
            report = xp.bessel_tail_experiments(p, cfg.x, max(cfg.N, 20000),
                                                cfg.dt, cfg.seed, th)
        elif cfg.experiment == "commutation":
            report = xp.commutation_experiment(p, cfg.x, 0.25, 0.25, cfg.N,
                                               max(cfg.dt, 1e-3), cfg.seed, th)
        elif cfg.experiment == "density-check":
            report = xp.density_check(p, th)
        elif cfg.experiment == "robustness":
            report = xp.discretization_robustness(p, cfg.x, min(cfg.N, 1000),
                                                  cfg.dt, cfg.seed, th)
        else:  # pragma: no cover - guarded by validate
            raise ValueError(cfg.experiment)

        payload = json.loads(report.to_json())
        payload["config"] = asdict(cfg)
        name = cfg.experiment.replace("-", "_")
        report_path = os.path.join(out_dir, f"{name}.report.json")
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
        if cfg.csv and csv_payload is None and cfg.experiment == "reversibility":
            A = musharp_batch(p, 0.0, cfg.x, 1.0, cfg.dt,
                              SeedSequence(cfg.seed, spawn_key=(0,)), cfg.N)
            csv_payload = (A, {"seed": cfg.seed, "x1": 0.0, "x2": cfg.x, "t0": 1.0})
        if csv_payload is not None:
            emit_csv(*csv_payload, os.path.join(out_dir, f"{name}.samples.csv"))
        print(f"{report.name}: {'PASS' if report.verdict else 'FAIL'} "
              f"(report: {report_path})")
        return 0 if report.verdict else 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="slecap",
        description="Conditioned chordal SLE samplers and verification experiments")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="key=value config file (flags override it)")
    ap.add_argument("--kappa", type=float)
    ap.add_argument("--x", type=float)
    ap.add_argument("--t0", type=float)
    ap.add_argument("--dt", type=float)
    ap.add_argument("--N", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--output-dir", dest="output_dir")
    ap.add_argument("--threads", type=int,
                    help="numba worker threads (default: available parallelism)")
    ap.add_argument("--csv", action="store_true", default=None,
                    help="also dump a sample batch as CSV")
    return ap


def config_from_args(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    merged = dict(DEFAULTS)
    if args.config:
        for key, val in parse_config_file(args.config).items():
            if key not in DEFAULTS and key != "experiment":
                raise ValueError(f"unknown config key {key!r}")
            if key != "experiment":
                merged[key] = _coerce(key, val)
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return RunConfig(experiment=args.experiment, **merged)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv if argv is not None else sys.argv[1:])
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
