"""Replication engine for the decomposition study.

Every replication draws its weight perturbation and its return sample from
seeds that are a pure function of ``(master_seed, nu, alpha, n, j)``, so a
cell summary does not depend on how replications are split across workers.
Per-replication results are reassembled in replication order before any
reduction.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .decomposition import compute
from .dist import MvtModel, check_seed, sample_mvt
from .empirical import QUANTILE_CONVENTION

logger = logging.getLogger(__name__)

SEED_DERIVATION = "SeedSequence(master_seed, spawn_key=(round(nu*1e6), round(alpha*1e9), n, j))"


@dataclass
class SimConfig:
    p: int = 5
    rho: float = 0.5
    nu_list: list = field(default_factory=lambda: [2.0, 3.0, 5.0, 10.0])
    alpha_list: list = field(default_factory=lambda: [0.90, 0.95, 0.99])
    n_list: list = field(default_factory=lambda: [1000, 5000, 10000])
    m: int = 10000
    master_seed: int = 20240601
    w0: list = None
    table_alpha: float = 0.95
    table_n: int = 10000
    rate_alpha: float = 0.95
    rate_n_list: list = field(default_factory=lambda: [1000, 10000, 100000])
    rate_m: int = 2000
    extended: bool = False

    def __post_init__(self):
        self.p = int(self.p)
        self.rho = float(self.rho)
        self.nu_list = [float(v) for v in self.nu_list]
        self.alpha_list = [float(a) for a in self.alpha_list]
        self.n_list = [int(n) for n in self.n_list]
        self.rate_n_list = [int(n) for n in self.rate_n_list]
        self.m = int(self.m)
        self.rate_m = int(self.rate_m)
        self.table_n = int(self.table_n)
        self.master_seed = check_seed(self.master_seed)
        if self.w0 is None:
            self.w0 = [1.0 / self.p] * self.p
        self.w0 = [float(x) for x in self.w0]
        if self.p < 1:
            raise ValueError("p must be positive")
        if not -1.0 / max(self.p - 1, 1) < self.rho < 1.0:
            raise ValueError(f"rho={self.rho} does not give a positive-definite scatter")
        if self.m < 2 or self.rate_m < 2:
            raise ValueError("replication counts must be >= 2")
        for name in ("nu_list", "alpha_list", "n_list", "rate_n_list"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if any(not (0 < a < 1) for a in self.alpha_list + [self.table_alpha, self.rate_alpha]):
            raise ValueError("every alpha must lie in (0, 1)")
        if any(v <= 0 for v in self.nu_list):
            raise ValueError("every nu must be positive")
        if any(n < 1 for n in self.n_list + self.rate_n_list + [self.table_n]):
            raise ValueError("sample sizes must be >= 1")
        if len(self.w0) != self.p:
            raise ValueError(f"w0 has length {len(self.w0)}, expected p={self.p}")
        if abs(sum(self.w0) - 1.0) > 1e-9:
            raise ValueError("w0 must sum to one")
        self.model(self.nu_list[0])  # positive-definiteness check

    def model(self, nu):
        return MvtModel.equicorrelated(self.p, self.rho, nu)

    @classmethod
    def from_mapping(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise KeyError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class McCellSummary:
    nu: float
    alpha: float
    n: int
    mean_abs_d1: float
    mean_abs_d2: float
    mean_abs_d3: float
    mcse_d1: float
    mcse_d2: float
    mcse_d3: float
    rel_contribution_d3: float
    m: int
    boundary_flag: bool


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: list


def replication_seeds(master_seed, nu, alpha, n, j):
    """``(weight_seed, sample_seed)`` for replication ``j`` of a cell."""
    key = (int(round(nu * 1e6)), int(round(alpha * 1e9)), int(n), int(j))
    ss = np.random.SeedSequence(check_seed(master_seed), spawn_key=key)
    w_seed, s_seed = ss.generate_state(2, np.uint64)
    return int(w_seed), int(s_seed)


def _perturb(w0, n, rng):
    resamples = 0
    sd = 1.0 / math.sqrt(n)
    while True:
        raw = w0 + rng.normal(0.0, sd, w0.shape[0])
        total = raw.sum()
        if abs(total) > 1e-8:
            return raw / total, resamples
        resamples += 1


def perturb_weights(w0, n, seed):
    """``(w0 + eps) / sum(w0 + eps)`` with ``eps ~ N(0, I / n)``."""
    w0 = np.asarray(w0, dtype=float)
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    if abs(w0.sum() - 1.0) > 1e-9:
        raise ValueError("w0 must sum to one")
    rng = np.random.Generator(np.random.PCG64(check_seed(seed)))
    w_hat, resamples = _perturb(w0, int(n), rng)
    if resamples:
        logger.warning("perturb_weights resampled %d time(s): weight sum near zero", resamples)
    return w_hat


def _replicate_block(args):
    p, rho, nu, alpha, n, w0, master_seed, start, stop = args
    model = MvtModel.equicorrelated(p, rho, nu)
    w0 = np.asarray(w0, dtype=float)
    out = np.empty((stop - start, 3))
    for i, j in enumerate(range(start, stop)):
        w_seed, s_seed = replication_seeds(master_seed, nu, alpha, n, j)
        w_hat = perturb_weights(w0, n, w_seed)
        dec = compute(model, sample_mvt(model, n, s_seed), w0, w_hat, alpha)
        out[i] = dec.d1, dec.d2, dec.d3
    return out


def simulate_cell(config, nu, alpha, n, m=None, threads=1):
    """Raw ``(m, 3)`` array of ``(d1, d2, d3)`` in replication order."""
    m = config.m if m is None else int(m)
    threads = max(int(threads), 1)
    nblocks = min(max(threads * 4, 1), m) if threads > 1 else 1
    edges = np.linspace(0, m, nblocks + 1).astype(int)
    jobs = [
        (config.p, config.rho, float(nu), float(alpha), int(n), config.w0,
         config.master_seed, int(a), int(b))
        for a, b in zip(edges[:-1], edges[1:]) if b > a
    ]
    if threads == 1:
        blocks = [_replicate_block(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(_replicate_block, jobs))
    return np.concatenate(blocks, axis=0)


def summarize(values, nu, alpha, n):
    mags = np.abs(np.asarray(values, dtype=float))
    m = mags.shape[0]
    means = mags.mean(axis=0)
    mcse = mags.std(axis=0, ddof=1) / math.sqrt(m)
    return McCellSummary(
        nu=float(nu), alpha=float(alpha), n=int(n),
        mean_abs_d1=float(means[0]), mean_abs_d2=float(means[1]), mean_abs_d3=float(means[2]),
        mcse_d1=float(mcse[0]), mcse_d2=float(mcse[1]), mcse_d3=float(mcse[2]),
        rel_contribution_d3=float(means[2] / means.sum()) if means.sum() > 0 else 0.0,
        m=m, boundary_flag=bool(nu <= 2.0),
    )


def run_cell(config, nu, alpha, n, m=None, threads=1):
    """Monte Carlo summary of ``|D1|, |D2|, |D3|`` for one ``(nu, alpha, n)`` cell."""
    values = simulate_cell(config, nu, alpha, n, m=m, threads=threads)
    return summarize(values, nu, alpha, n)


def fit_loglog(ns, values):
    """OLS of ``log(values)`` on ``log(ns)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if x.shape[0] < 3 or np.unique(x).shape[0] < 3:
        raise ValueError("rate regression needs at least 3 distinct sample sizes")
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    return RateFit(slope, intercept, min(max(r2, 0.0), 1.0), list(zip(x.tolist(), y.tolist())))


def rate_regression(cells):
    """Regress ``log mean|D3|`` on ``log n`` across cells sharing ``(nu, alpha)``."""
    cells = sorted(cells, key=lambda c: c.n)
    if len({(c.nu, c.alpha) for c in cells}) > 1:
        raise ValueError("rate regression cells must share (nu, alpha)")
    return fit_loglog([c.n for c in cells], [c.mean_abs_d3 for c in cells])


# --------------------------------------------------------------------------
# table emission

def fmt(x):
    """17 significant digits: round-trips any float64."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


CELL_COLUMNS = [
    "nu", "alpha", "n", "m", "boundary", "mean_abs_d1", "mcse_d1", "mean_abs_d2", "mcse_d2",
    "mean_abs_d3", "mcse_d3", "rel_contribution_d3",
]


def _cell_row(c):
    return [c.nu, c.alpha, c.n, c.m, c.boundary_flag, c.mean_abs_d1, c.mcse_d1,
            c.mean_abs_d2, c.mcse_d2, c.mean_abs_d3, c.mcse_d3, c.rel_contribution_d3]


def table_cells(config):
    """Every ``(nu, alpha, n)`` cell the three tables need, deduplicated."""
    cells = []
    for nu in config.nu_list:
        cells.append((nu, config.table_alpha, config.table_n))
        for alpha in config.alpha_list:
            cells.append((nu, alpha, config.table_n))
        for n in config.n_list:
            cells.append((nu, config.table_alpha, n))
    return list(dict.fromkeys(cells))


def build_tables(config, summaries):
    """CSV text of the component table, the stress table and the appendix table."""
    desc = sorted(config.nu_list, reverse=True)
    t1 = [
        [nu, nu <= 2.0] + [getattr(summaries[(nu, config.table_alpha, config.table_n)], k)
                           for k in ("mean_abs_d1", "mean_abs_d2", "mean_abs_d3",
                                     "rel_contribution_d3")]
        for nu in desc
    ]
    table1 = _csv_text(
        ["nu", "boundary", "mean_abs_d1", "mean_abs_d2", "mean_abs_d3", "rel_contribution_d3"],
        t1,
    )
    t2_header = ["nu", "boundary"] + [f"mean_abs_d3_alpha_{a:g}" for a in config.alpha_list]
    t2 = [
        [nu, nu <= 2.0] + [summaries[(nu, a, config.table_n)].mean_abs_d3
                           for a in config.alpha_list]
        for nu in desc
    ]
    table2 = _csv_text(t2_header, t2)
    appendix = _csv_text(
        ["n", "nu", "boundary", "mean_abs_d1", "mcse_d1", "mean_abs_d2", "mcse_d2",
         "mean_abs_d3", "mcse_d3", "rel_contribution_d3"],
        [
            [c.n, c.nu, c.boundary_flag, c.mean_abs_d1, c.mcse_d1, c.mean_abs_d2,
             c.mcse_d2, c.mean_abs_d3, c.mcse_d3, c.rel_contribution_d3]
            for n in sorted(config.n_list) for nu in desc
            for c in [summaries[(nu, config.table_alpha, n)]]
        ],
    )
    return {"table1.csv": table1, "table2.csv": table2, "table_appendix.csv": appendix}


def manifest(config, command, outputs, threads=1, extra=None):
    doc = {
        "command": command,
        "tool": "qqvar",
        "version": __version__,
        "config": asdict(config),
        "master_seed": config.master_seed,
        "seed_derivation": SEED_DERIVATION,
        "quantile_convention": QUANTILE_CONVENTION,
        "threads": int(threads),
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    return doc


def reproduce_tables(config, out_dir, threads=1, progress=None):
    """Run every table cell and write the CSV tables plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    summaries = {}
    for key in table_cells(config):
        summaries[key] = run_cell(config, *key, threads=threads)
        if progress:
            progress(summaries[key])
    texts = build_tables(config, summaries)
    texts["cells.csv"] = _csv_text(CELL_COLUMNS, [_cell_row(s) for s in summaries.values()])
    for name, text in texts.items():
        _write(os.path.join(out_dir, name), text)
    doc = manifest(config, "simulate", list(texts), threads)
    _write(os.path.join(out_dir, "manifest.json"), json.dumps(doc, indent=2) + "\n")
    return summaries


def rate_sizes(config, extended=None):
    sizes = list(config.rate_n_list)
    if (config.extended if extended is None else extended) and 10**6 not in sizes:
        sizes.append(10**6)
    return sorted(sizes)


def run_rate_study(config, threads=1, extended=None, synthetic_slope=None, progress=None):
    """Per-nu rate fits of ``log mean|D3|`` on ``log n``.

    With ``synthetic_slope`` the simulation is skipped and an exact power law
    ``n ** synthetic_slope`` is fed to the regression instead.
    """
    fits = {}
    cells = {}
    for nu in sorted(config.nu_list, reverse=True):
        row = []
        for n in rate_sizes(config, extended):
            if synthetic_slope is None:
                cell = run_cell(config, nu, config.rate_alpha, n, m=config.rate_m, threads=threads)
            else:
                val = float(n) ** synthetic_slope
                cell = McCellSummary(nu, config.rate_alpha, n, 0.0, 0.0, val, 0.0, 0.0, 0.0,
                                     1.0, config.rate_m, nu <= 2.0)
            row.append(cell)
            if progress:
                progress(cell)
        cells[nu] = row
        fits[nu] = rate_regression(row)
    return fits, cells


def write_rate_outputs(config, fits, cells, out_dir, threads=1, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    rate = _csv_text(
        ["nu", "alpha", "slope", "intercept", "r_squared", "n_points"],
        [[nu, config.rate_alpha, f.slope, f.intercept, f.r_squared, len(f.points)]
         for nu, f in fits.items()],
    )
    points = _csv_text(CELL_COLUMNS, [_cell_row(c) for row in cells.values() for c in row])
    _write(os.path.join(out_dir, "rate.csv"), rate)
    _write(os.path.join(out_dir, "rate_cells.csv"), points)
    doc = manifest(config, "rate", ["rate.csv", "rate_cells.csv"], threads, extra)
    _write(os.path.join(out_dir, "manifest.json"), json.dumps(doc, indent=2) + "\n")
