"""Seeded Monte Carlo experiments, CSV output and the command line.

Trial ``k`` of a run with base seed ``b`` draws everything from
``RngSeed(b, 0).derive(k)``: the signal from ``.derive(0)``, the ensemble
from ``.derive(1)``, the pipeline dithers from ``.derive(2)`` and the noise
from ``.derive(3)``. Rows are sorted by (grid point, trial) before writing,
so serial and pooled runs emit the same bytes.
"""

import argparse
import csv
import io
import json
import logging
import math
import statistics
import struct
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import RngSeed, random_sparse, random_sparse_unit, uniform_block
from .diagnostics import (REPORT_HEADER, check_rip, check_spep, check_tessellation,
                          format_real)
from .errors import FormatError, InfeasibleError, InvalidArgument
from .measure import NoiseSpec, QuantizedRecord, make_ensemble, quantize
from .pipeline import (PipelineConfig, calibrated_q, oversampling_factor, quantize_adaptive,
                       recover_adaptive)

log = logging.getLogger(__name__)

KINDS = ("decay", "noise", "scheme-test", "diagnose", "fixtures")

DECAY_HEADER = ("m", "lambda", "scheme", "trial", "rel_error", "elapsed_ms", "status", "signal_scale")
DECAY_SUMMARY_HEADER = ("m", "lambda", "scheme", "q", "T", "trials", "n_failed",
                        "mean_rel_error", "median_rel_error")
NOISE_HEADER = ("t", "sigma", "flip_frac", "median_rel_error", "scheme", "trials", "n_failed")
SCHEME_HEADER = ("trial", "scheme", "q", "norm_x", "error", "within_quarter", "status")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "decay"
    n: int = 100
    s: int = 10
    R: float = 1.0
    m: Tuple[int, ...] = ()
    T: Optional[int] = None
    q: Optional[int] = None
    scheme: str = "ht"
    sigma: Tuple[float, ...] = (0.0,)
    flip_frac: float = 0.0
    trials: int = 10
    seed: int = 0
    radius_preset: str = "practical"
    delta: float = 0.5
    workers: int = 1
    timing: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        object.__setattr__(self, "sigma", tuple(float(v) for v in self.sigma))
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown experiment kind {self.kind!r}")
        if self.n < 1 or self.s < 1 or self.trials < 1 or self.workers < 1:
            raise InvalidArgument("n, s, trials and workers must be >= 1")
        if self.s > self.n:
            raise InvalidArgument(f"s={self.s} exceeds n={self.n}")
        if not self.R > 0:
            raise InvalidArgument("R must be positive")
        if self.scheme not in ("ht", "socp"):
            raise InvalidArgument(f"unknown scheme {self.scheme!r}")
        if any(v < 1 for v in self.m):
            raise InvalidArgument("measurement counts must be >= 1")
        if any(v < 0 for v in self.sigma) or not 0 <= self.flip_frac <= 1:
            raise InvalidArgument("need sigma >= 0 and flip_frac in [0, 1]")
        if self.T is not None and self.T < 1:
            raise InvalidArgument("T must be >= 1")
        if self.q is not None and self.q < 1:
            raise InvalidArgument("q must be >= 1")

    @property
    def base_seed(self) -> RngSeed:
        return RngSeed(self.seed, 0)

    def trial_seed(self, k: int) -> RngSeed:
        return self.base_seed.derive(k)

    def batch_size(self, m: Optional[int] = None) -> int:
        """Fixed q if given; m // T when only T is fixed; calibrated otherwise."""
        if self.q is not None:
            return self.q
        if self.T is not None and m is not None:
            q = m // self.T
            return q - (q % 2) if self.scheme == "ht" else q
        return calibrated_q(self.scheme, self.s, self.n)


def lambda_grid(n: int, s: int, lo: float, hi: float, count: int) -> Tuple[int, ...]:
    """Measurement counts m = ceil(lambda s ln(n/s)) for evenly spaced lambda."""
    if count < 1:
        raise InvalidArgument("grid needs at least one point")
    scale = oversampling_factor(1, n, s)
    return tuple(int(math.ceil(lam / scale - 1e-9)) for lam in np.linspace(lo, hi, count))


def make_signal(seed: RngSeed, n: int, s: int, R: float):
    """Gaussian entries on a random support, shrunk onto the R-ball if longer.

    Returns the signal and the applied scale factor.
    """
    x = random_sparse(seed, n, s)
    nrm = np.linalg.norm(x)
    scale = R / nrm if nrm > R else 1.0
    return x * scale, scale


def _pipeline_cfg(spec: ExperimentSpec, m: int, q: int, seed: RngSeed) -> PipelineConfig:
    return PipelineConfig(s=spec.s, q=q, m=m, R=spec.R, scheme=spec.scheme,
                          radius_preset=spec.radius_preset, seed=seed)


def _noise(spec, seed, m, sigma):
    if sigma == 0 and spec.flip_frac == 0:
        return None
    return NoiseSpec.random(seed.derive(3), m, sigma, spec.flip_frac)


def _run_pool(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    return str(v)


# -- decay sweep ------------------------------------------------------------

def _decay_trial(job):
    spec, m, k = job
    seed = spec.trial_seed(k)
    x, scale = make_signal(seed.derive(0), spec.n, spec.s, spec.R)
    q = spec.batch_size(m)
    t0 = time.perf_counter()
    if q < 1 or m // q < 1:
        # no full batch fits: the decoder output is its starting point x_0 = 0
        status, xh = "no-batch", np.zeros(spec.n)
    else:
        ens = make_ensemble(seed.derive(1), m, spec.n)
        cfg = _pipeline_cfg(spec, m, q, seed.derive(2))
        try:
            rec = quantize_adaptive(x, ens, _noise(spec, seed, m, spec.sigma[0]), cfg)
            xh = recover_adaptive(rec, ens, cfg).values
            status = "ok"
        except InfeasibleError as exc:
            log.info("trial %d, m=%d: infeasible at batch %s", k, m, exc.batch)
            status, xh = "infeasible", None
    elapsed = (time.perf_counter() - t0) * 1e3
    err = None if xh is None else float(np.linalg.norm(x - xh) / np.linalg.norm(x))
    return m, k, err, elapsed, status, scale


def run_decay_sweep(spec: ExperimentSpec):
    """Relative error of the full pipeline over a grid of measurement counts.

    Returns ``(per_trial_csv, summary_csv, summary_rows)``.
    """
    if not spec.m:
        raise InvalidArgument("empty m-grid")
    jobs = [(spec, m, k) for m in spec.m for k in range(spec.trials)]
    results = sorted(_run_pool(_decay_trial, jobs, spec.workers), key=lambda r: (spec.m.index(r[0]), r[1]))
    rows, summary = [], []
    for m in spec.m:
        lam = oversampling_factor(m, spec.n, spec.s)
        mine = [r for r in results if r[0] == m]
        for _, k, err, elapsed, status, scale in mine:
            rows.append([str(m), format_real(lam), spec.scheme, str(k), _fmt(err),
                         format_real(elapsed) if spec.timing else "", status, format_real(scale)])
        errs = [r[2] for r in mine if r[2] is not None]
        q = spec.batch_size(m)
        summary.append({
            "m": m, "lambda": lam, "scheme": spec.scheme, "q": q, "T": m // q if q else 0,
            "trials": spec.trials, "n_failed": sum(r[4] == "infeasible" for r in mine),
            "mean_rel_error": statistics.fmean(errs) if errs else None,
            "median_rel_error": statistics.median(errs) if errs else None,
        })
    summary_csv = _rows_to_csv(DECAY_SUMMARY_HEADER, [[_fmt(r[h]) for h in DECAY_SUMMARY_HEADER] for r in summary])
    return _rows_to_csv(DECAY_HEADER, rows), summary_csv, summary


def log_linear_fit(lams, errors):
    """Least squares of ln(error) on lambda: (slope, intercept, R^2)."""
    lams = np.asarray(lams, dtype=np.float64)
    y = np.log(np.asarray(errors, dtype=np.float64))
    X = np.column_stack([lams, np.ones_like(lams)])
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - X @ coef) ** 2) / ss_tot if ss_tot > 0 else 0.0
    return float(coef[0]), float(coef[1]), float(r2)


# -- noise curve ------------------------------------------------------------

def _noise_trial(job):
    spec, sigma, k, m, q = job
    seed = spec.trial_seed(k)
    x, _ = make_signal(seed.derive(0), spec.n, spec.s, spec.R)
    ens = make_ensemble(seed.derive(1), m, spec.n)
    cfg = _pipeline_cfg(spec, m, q, seed.derive(2))
    nx = np.linalg.norm(x)
    try:
        _, its = quantize_adaptive(x, ens, _noise(spec, seed, m, sigma), cfg, return_iterates=True)
        return sigma, k, [float(np.linalg.norm(x - xt) / nx) for xt in its[1:]], None
    except InfeasibleError as exc:
        return sigma, k, None, exc.batch


def run_noise_curve(spec: ExperimentSpec):
    """Median relative error of x_t for t = 1..T, one curve per sigma.

    A trial that turns infeasible counts as failed for every t.
    Returns ``(csv_text, rows)`` with rows as dicts keyed by NOISE_HEADER.
    """
    if spec.T is None:
        raise InvalidArgument("noise curve needs T")
    q = spec.q if spec.q is not None else calibrated_q(spec.scheme, spec.s, spec.n)
    m = q * spec.T
    jobs = [(spec, sg, k, m, q) for sg in spec.sigma for k in range(spec.trials)]
    results = _run_pool(_noise_trial, jobs, spec.workers)
    rows = []
    for sg in spec.sigma:
        mine = sorted((r for r in results if r[0] == sg), key=lambda r: r[1])
        ok = [r[2] for r in mine if r[2] is not None]
        failed = len(mine) - len(ok)
        for t in range(1, spec.T + 1):
            med = statistics.median(c[t - 1] for c in ok) if ok else None
            rows.append({"t": t, "sigma": sg, "flip_frac": spec.flip_frac, "median_rel_error": med,
                         "scheme": spec.scheme, "trials": spec.trials, "n_failed": failed})
    text = _rows_to_csv(NOISE_HEADER, [[_fmt(r[h]) for h in NOISE_HEADER] for r in rows])
    return text, rows


# -- single order-one step --------------------------------------------------

def _scheme_trial(job):
    spec, q, k = job
    seed = spec.trial_seed(k)
    # ||x|| uniform on [R/2, R]
    norm_x = spec.R * (0.5 + 0.5 * uniform_block(seed.derive(4), 0, 1)[0])
    x = norm_x * random_sparse_unit(seed.derive(0), spec.n, spec.s)
    ens = make_ensemble(seed.derive(1), q, spec.n)
    cfg = PipelineConfig(s=spec.s, q=q, m=q, R=spec.R, scheme=spec.scheme,
                         radius_preset=spec.radius_preset, scheme_sparsity=spec.s)
    scheme = cfg.build_scheme()
    tau = scheme.produce_thresholds(ens @ x, ens, spec.R, seed.derive(2))
    noise = _noise(spec, seed, q, spec.sigma[0])
    y = quantize(ens @ x, tau, noise)
    try:
        err = float(np.linalg.norm(x - scheme.recover(y, ens, spec.R, tau)))
        return k, norm_x, err, "ok"
    except InfeasibleError:
        return k, norm_x, None, "infeasible"


def run_scheme_test(spec: ExperimentSpec):
    """One order-one recovery per trial at sparsity s, radius R.

    Returns ``(csv_text, n_within)`` where n_within counts errors <= R/4.
    """
    q = spec.batch_size()
    results = sorted(_run_pool(_scheme_trial, [(spec, q, k) for k in range(spec.trials)], spec.workers))
    rows, hits = [], 0
    for k, norm_x, err, status in results:
        within = err is not None and err <= spec.R / 4
        hits += within
        rows.append([str(k), spec.scheme, str(q), format_real(norm_x), _fmt(err), str(int(within)), status])
    return _rows_to_csv(SCHEME_HEADER, rows), hits


# -- diagnostics ------------------------------------------------------------

def run_diagnostics(spec: ExperimentSpec):
    """RIP, SPEP and tessellation reports on one q x n ensemble."""
    q = spec.batch_size()
    base = spec.base_seed
    ens = make_ensemble(base.derive(0), q, spec.n)
    tau = spec.R * np.asarray(make_ensemble(base.derive(1), q, 1).matrix[:, 0])
    reports = [
        check_rip(ens, spec.s, spec.delta, spec.trials, base.derive(2)),
        check_spep(ens, spec.s, spec.delta, spec.trials, base.derive(3)),
        check_tessellation(ens, tau, spec.s, spec.delta, spec.trials, base.derive(4)),
    ]
    return _rows_to_csv(REPORT_HEADER, [r.csv_row() for r in reports]), reports


# -- fixtures ---------------------------------------------------------------

FIXTURE_MAGIC = b"OBCSFIX1"
_LEN = struct.Struct("<I")


def _fixture_meta(spec, k, m, q, rel_error):
    return {"n": spec.n, "s": spec.s, "q": q, "m": m, "R": spec.R, "scheme": spec.scheme,
            "radius_preset": spec.radius_preset, "seed": spec.seed, "trial": k,
            "rel_error": format_real(rel_error)}


def fixture_bytes(spec: ExperimentSpec, k: int) -> bytes:
    """Layout: magic, u32 JSON length, JSON header, record bytes, x (n f8), x_hat (n f8)."""
    m = spec.m[0] if spec.m else spec.batch_size() * (spec.T or 3)
    q = spec.batch_size(m)
    seed = spec.trial_seed(k)
    x, _ = make_signal(seed.derive(0), spec.n, spec.s, spec.R)
    ens = make_ensemble(seed.derive(1), m, spec.n)
    cfg = _pipeline_cfg(spec, m, q, seed.derive(2))
    rec = quantize_adaptive(x, ens, None, cfg)
    xh = recover_adaptive(rec, ens, cfg).values
    err = float(np.linalg.norm(x - xh) / np.linalg.norm(x))
    header = json.dumps(_fixture_meta(spec, k, m, q, err), sort_keys=True, separators=(",", ":")).encode()
    return (FIXTURE_MAGIC + _LEN.pack(len(header)) + header + rec.to_bytes()
            + x.astype("<f8").tobytes() + xh.astype("<f8").tobytes())


def generate_fixtures(spec: ExperimentSpec, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(spec.trials):
        p = out_dir / f"fixture_{k:03d}.bin"
        p.write_bytes(fixture_bytes(spec, k))
        paths.append(p)
    return paths


def read_fixture(data: bytes):
    """Parse fixture bytes into (meta, record, x, x_hat)."""
    head = len(FIXTURE_MAGIC) + _LEN.size
    if len(data) < head or data[:len(FIXTURE_MAGIC)] != FIXTURE_MAGIC:
        raise FormatError("bad fixture magic")
    (hlen,) = _LEN.unpack_from(data, len(FIXTURE_MAGIC))
    try:
        meta = json.loads(data[head:head + hlen])
        n, m = int(meta["n"]), int(meta["m"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad fixture header: {exc}") from exc
    body = data[head + hlen:]
    rec_len = 16 + 9 * m
    if len(body) != rec_len + 16 * n:
        raise FormatError("fixture length does not match its header")
    rec = QuantizedRecord.from_bytes(body[:rec_len])
    x = np.frombuffer(body, dtype="<f8", count=n, offset=rec_len).astype(np.float64)
    xh = np.frombuffer(body, dtype="<f8", count=n, offset=rec_len + 8 * n).astype(np.float64)
    return meta, rec, x, xh


def replay_fixture(data: bytes):
    """Decode a fixture's record again; returns (meta, x, stored x_hat, fresh x_hat)."""
    meta, rec, x, xh = read_fixture(data)
    seed = RngSeed(int(meta["seed"]), 0).derive(int(meta["trial"]))
    ens = make_ensemble(seed.derive(1), meta["m"], meta["n"])
    cfg = PipelineConfig(s=meta["s"], q=meta["q"], m=meta["m"], R=meta["R"], scheme=meta["scheme"],
                         radius_preset=meta["radius_preset"], seed=seed.derive(2))
    return meta, x, xh, recover_adaptive(rec, ens, cfg).values


# -- command line -----------------------------------------------------------

def _int_list(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _float_list(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _parser():
    p = argparse.ArgumentParser(prog="onebitcs", description="Adaptive one-bit compressed sensing experiments.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", help="JSON file whose keys mirror the long flags (dashes as underscores)")
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--m", help="comma-separated measurement counts")
    p.add_argument("--lambda-grid", help="lo:hi:count, evenly spaced oversampling factors (sets --m)")
    p.add_argument("--q", type=int, help="batch size (default: calibrated, or m // T when --T is given)")
    p.add_argument("--T", type=int)
    p.add_argument("--R", type=float)
    p.add_argument("--scheme", choices=("ht", "socp"))
    p.add_argument("--sigma", help="comma-separated pre-quantization noise levels")
    p.add_argument("--flip-frac", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--radius-preset", choices=("practical", "theoretical"))
    p.add_argument("--delta", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", action="store_true", default=None,
                   help="fill elapsed_ms (makes the CSV run-dependent)")
    p.add_argument("--out", help="output CSV path (directory for fixtures)")
    return p


def spec_from_args(argv: Optional[Sequence[str]] = None) -> ExperimentSpec:
    args = _parser().parse_args(argv)
    opts = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            opts.update({k.replace("-", "_"): v for k, v in json.load(fh).items()})
    # explicit flags win over the config file
    opts.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "kind")})
    grid = opts.pop("lambda_grid", None)
    if isinstance(opts.get("m"), (str, int)):
        opts["m"] = _int_list(opts["m"])
    if isinstance(opts.get("sigma"), (str, int, float)):
        opts["sigma"] = _float_list(opts["sigma"])
    if grid is not None:
        lo, hi, count = str(grid).split(":")
        opts["m"] = lambda_grid(opts.get("n", 100), opts.get("s", 10), float(lo), float(hi), int(count))
    known = set(ExperimentSpec.__dataclass_fields__)
    unknown = set(opts) - known
    if unknown:
        raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
    return ExperimentSpec(kind=args.kind, **opts)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(argv)
        if spec.kind == "decay":
            trials, summary, rows = run_decay_sweep(spec)
            _emit(trials, spec.out)
            if spec.out:
                _emit(summary, str(Path(spec.out).with_suffix(".summary.csv")))
            lams = [r["lambda"] for r in rows if r["median_rel_error"]]
            meds = [r["median_rel_error"] for r in rows if r["median_rel_error"]]
            if len(lams) >= 2:
                slope, _, r2 = log_linear_fit(lams, meds)
                print(f"ln(median error) vs lambda: slope {slope:.4g}, R^2 {r2:.4f}", file=sys.stderr)
        elif spec.kind == "noise":
            _emit(run_noise_curve(spec)[0], spec.out)
        elif spec.kind == "scheme-test":
            text, hits = run_scheme_test(spec)
            _emit(text, spec.out)
            print(f"{hits}/{spec.trials} trials within R/4", file=sys.stderr)
        elif spec.kind == "diagnose":
            _emit(run_diagnostics(spec)[0], spec.out)
        else:
            paths = generate_fixtures(spec, spec.out or "fixtures")
            print(f"wrote {len(paths)} fixtures", file=sys.stderr)
    except (InvalidArgument, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
