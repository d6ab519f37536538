"""Experiment harness: built-in spectra, configs, multi-trial runs, CSV and plots."""
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bounds import bound_tracker_run, pencil_tracker_run
from .operators import (ChebyshevFilter, DiagonalOperator, HermitianPencil, Spectrum,
                        load_spectrum)
from .rng import random_block, trial_seed
from .solvers import (make_deflation_set, deflate_and_continue, run_block_shift_invert,
                      run_filtered_iteration, run_restarted_block_davidson,
                      run_restarted_block_lanczos)

MODES = ("lanczos", "chebyshev-compare", "shift-invert", "davidson", "deflated")
PENCIL_MODES = ("shift-invert", "davidson", "deflated")
BOUND_NAMES = ("B1", "B2", "B3")
CSV_HEADER = ("outer_step", "inner_step", "ritz_index", "mean_error", "bound1", "bound2",
              "bound3", "chebyshev_mean_error", "flags")
CSV_EXTRA = ("bound1_min", "bound1_max", "bound2_min", "bound2_max", "bound3_min",
             "bound3_max")


# ---------------------------------------------------------------------------
# Built-in spectra
# ---------------------------------------------------------------------------

def spectrum_example1(n: int = 900) -> Spectrum:
    """``2, 1.6, 1.4`` followed by ``1 - (j - 3)/n`` for ``j = 4..n``."""
    j = np.arange(4, n + 1)
    return Spectrum(np.concatenate([[2.0, 1.6, 1.4], 1.0 - (j - 3) / n]))


EXAMPLE2_CLUSTERS = (2.05, 2.0, 1.95, 1.65, 1.6, 1.55, 1.45, 1.4, 1.35)


def spectrum_example2(n: int = 3600) -> Spectrum:
    """Three clusters of three values followed by ``1 - (j - 9)/n``."""
    j = np.arange(10, n + 1)
    return Spectrum(np.concatenate([EXAMPLE2_CLUSTERS, 1.0 - (j - 9) / n]))


BUILTIN = {"example1": spectrum_example1, "example2": spectrum_example2}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class ExperimentConfig:
    """One experiment.

    ``spectrum`` is ``"example1"``, ``"example2"``, a spectrum file path or
    ``{"L": path, "S": path}`` for a pencil. ``k`` counts inner steps per
    outer step (Krylov degree ``k - 1``). ``n`` overrides the size of a
    built-in spectrum and ``jobs`` sets the default concurrency.
    """

    spectrum: object = "example1"
    p: int = 3
    k: int = 15
    m: int = 1
    trials: int = 1000
    seed: int = 0
    ritz_indices: list = None
    bounds: list = field(default_factory=lambda: list(BOUND_NAMES))
    mode: str = "lanczos"
    beta: float = None
    locked_count: int = None
    n: int = None
    jobs: int = 1

    def __post_init__(self):
        if self.ritz_indices is None:
            self.ritz_indices = list(range(1, int(self.p) + 1)) if _is_int(self.p) else []
        self.validate()

    def validate(self):
        for name in ("p", "k", "m", "trials", "jobs"):
            v = getattr(self, name)
            if not _is_int(v) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if not _is_int(self.seed) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {self.seed!r}")
        if not isinstance(self.ritz_indices, list) or not self.ritz_indices:
            raise ConfigError("ritz_indices: must be a nonempty list")
        for i in self.ritz_indices:
            if not _is_int(i) or not 1 <= i <= self.p:
                raise ConfigError(f"ritz_indices: {i!r} outside 1..p={self.p}")
        if not isinstance(self.bounds, list) or any(b not in BOUND_NAMES for b in self.bounds):
            raise ConfigError(f"bounds: must be a list drawn from {list(BOUND_NAMES)}")
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {list(MODES)}, got {self.mode!r}")
        if self.beta is not None and not isinstance(self.beta, (int, float)):
            raise ConfigError("beta: must be a number")
        if self.locked_count is not None and (not _is_int(self.locked_count)
                                              or self.locked_count < 0):
            raise ConfigError("locked_count: must be a nonnegative integer")
        if self.n is not None and (not _is_int(self.n) or self.n < 2):
            raise ConfigError("n: must be an integer >= 2")
        sp = self.spectrum
        if isinstance(sp, dict):
            if set(sp) != {"L", "S"}:
                raise ConfigError("spectrum: pencil input needs exactly the keys L and S")
            if self.mode not in PENCIL_MODES:
                raise ConfigError(f"spectrum: pencil input requires a pencil mode, not {self.mode!r}")
        elif not isinstance(sp, str):
            raise ConfigError("spectrum: must be a builtin name, a path or {L, S}")
        if self.n is not None and not (isinstance(sp, str) and sp in BUILTIN):
            raise ConfigError("n: only applies to builtin spectra")


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


_FIELD_NAMES = [f.name for f in fields(ExperimentConfig)]


def parse_config(source) -> ExperimentConfig:
    """Config from a JSON string or a mapping; unknown keys are errors."""
    data = json.loads(source) if isinstance(source, str) else dict(source)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(_FIELD_NAMES))
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    try:
        return parse_config(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def config_to_json(cfg: ExperimentConfig) -> str:
    """Canonical JSON text (every field, declaration order)."""
    return json.dumps(asdict(cfg), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

def _spectrum_for(cfg):
    sp = cfg.spectrum
    if sp in BUILTIN:
        return BUILTIN[sp]() if cfg.n is None else BUILTIN[sp](cfg.n)
    return load_spectrum(sp)


_PROBLEMS = {}


def _cached_problem(cfg):
    key = json.dumps([cfg.spectrum, cfg.mode in PENCIL_MODES, cfg.beta, cfg.n])
    if key not in _PROBLEMS:
        _PROBLEMS.clear()
        _PROBLEMS[key] = build_problem(cfg)
    return _PROBLEMS[key]


def build_problem(cfg: ExperimentConfig):
    """Operator (standard modes) or pencil (pencil modes) of a config.

    Built-in and file spectra become ``diag(lambda)``; in pencil modes they
    become the pencil ``(diag(1/lambda), I)``, so that shift-and-invert with
    ``beta = 0`` iterates with ``diag(lambda)`` itself.
    """
    if cfg.mode not in PENCIL_MODES:
        return DiagonalOperator(_spectrum_for(cfg))
    beta = 0.0 if cfg.beta is None else float(cfg.beta)
    if isinstance(cfg.spectrum, dict):
        L = np.loadtxt(cfg.spectrum["L"], ndmin=2)
        S = np.loadtxt(cfg.spectrum["S"], ndmin=2)
        return HermitianPencil(L, S, beta)
    lam = _spectrum_for(cfg).eigenvalues
    if np.any(lam <= 0):
        raise ConfigError("spectrum: pencil modes need a positive spectrum")
    return HermitianPencil(np.diag(1.0 / lam), np.eye(lam.size), beta)


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    trial: int
    outer: list
    degree: list
    errors: np.ndarray
    bounds: dict
    flags: dict
    chebyshev_errors: np.ndarray = None


def _chebyshev_errors(op, Y0, trace, indices):
    spec = op.spectrum
    p, d = trace.meta["p"], trace.meta["degree"]
    lo, hi = spec.lam(spec.n), spec.lam(p + 1)
    lam_i = np.array([spec.lam(i) for i in indices])
    idx = np.asarray(indices) - 1
    out = np.empty((len(trace), len(indices)))
    Y = Y0
    cache = {}
    for e in range(len(trace)):
        s, c = trace.outer[e], trace.degree[e]
        if (s, c) not in cache:
            ft = run_filtered_iteration(op, Y, p, ChebyshevFilter(c, lo, hi), 1)
            cache[(s, c)] = ft.entries[-1]
        ritz = cache[(s, c)]
        out[e] = lam_i - ritz.values[idx]
        if e in trace.restarts:
            Y = ritz.vectors
            cache = {(s + 1, 0): ritz}
    return out


def run_trial(cfg: ExperimentConfig, trial: int, initial_block=None) -> TrialResult:
    """One seeded trial: solver run, measured errors and bound curves."""
    problem = _cached_problem(cfg)
    n, p = problem.n, cfg.p
    if initial_block is None:
        Y0 = random_block(n, p, trial_seed(cfg.seed, trial))
    elif callable(initial_block):
        Y0 = initial_block(problem, trial)
    else:
        Y0 = np.asarray(initial_block, dtype=float)
    indices = list(cfg.ritz_indices)
    idx = np.asarray(indices) - 1
    bounds, flags = {}, {}
    cheb = None
    meta = {"seed": trial_seed(cfg.seed, trial)}
    if cfg.mode in PENCIL_MODES:
        alpha = problem.alphas
        c0 = 0
        if cfg.mode == "shift-invert":
            trace = run_block_shift_invert(problem, Y0, p, cfg.m, meta=meta)
        elif cfg.mode == "davidson":
            trace = run_restarted_block_davidson(problem, Y0, p, cfg.k, cfg.m, meta=meta)
        else:
            c0 = 2 if cfg.locked_count is None else cfg.locked_count
            D = make_deflation_set(problem, problem.eig()[1][:, :c0])
            trace = deflate_and_continue(problem, D, Y0, p, "davidson", cfg.k, cfg.m,
                                         meta=meta)
        errors = trace.values[:, idx] - alpha[c0 + idx]
        if "B1" in cfg.bounds:
            curve = pencil_tracker_run(alpha, problem.beta, trace, indices, c0)
            bounds["B1"], flags["B1"] = curve.log10_error, curve.flags
    else:
        op = problem
        trace = run_restarted_block_lanczos(op, Y0, p, cfg.k, cfg.m, meta=meta)
        lam = op.spectrum.eigenvalues
        errors = lam[idx] - trace.values[:, idx]
        for name in cfg.bounds:
            curve = bound_tracker_run(op, trace, name, indices)
            bounds[name], flags[name] = curve.log10_error, curve.flags
        if cfg.mode == "chebyshev-compare":
            cheb = _chebyshev_errors(op, Y0, trace, indices)
    return TrialResult(trial, list(trace.outer), list(trace.degree), errors, bounds, flags,
                       cheb)


def _trial_worker(args):
    cfg, trial = args
    return run_trial(cfg, trial)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    """Per-(entry, index) aggregates over trials.

    ``bound_mean`` holds geometric means (mean of ``log10``) over the trials
    where the bound was not flagged; ``bound_min``/``bound_max`` the
    extremes; ``flag_counts`` the number of flagged trials.
    """

    config: ExperimentConfig
    outer: list
    inner: list
    ritz_indices: list
    mean_error: np.ndarray
    bound_mean: dict
    bound_min: dict
    bound_max: dict
    flag_counts: dict
    chebyshev_mean_error: np.ndarray = None


def aggregate(cfg: ExperimentConfig, results) -> ExperimentResult:
    results = sorted(results, key=lambda r: r.trial)
    first = results[0]
    E = len(first.outer)
    errors = np.stack([r.errors for r in results])
    mean_error = errors.sum(axis=0) / len(results)
    bmean, bmin, bmax, fcount = {}, {}, {}, {}
    for name in first.bounds:
        L = np.stack([r.bounds[name] for r in results])
        valid = ~np.isnan(L)
        count = valid.sum(axis=0)
        with np.errstate(invalid="ignore"):
            s = np.where(valid, L, 0.0).sum(axis=0)
            mean_log = np.where(count > 0, s / np.maximum(count, 1), np.nan)
        bmean[name] = np.power(10.0, mean_log)
        lo = np.where(valid, L, np.inf).min(axis=0)
        hi = np.where(valid, L, -np.inf).max(axis=0)
        bmin[name] = np.where(count > 0, np.power(10.0, lo), np.nan)
        bmax[name] = np.where(count > 0, np.power(10.0, hi), np.nan)
        fcount[name] = (len(results) - count).astype(int)
    cheb = None
    if first.chebyshev_errors is not None:
        cheb = np.stack([r.chebyshev_errors for r in results]).sum(axis=0) / len(results)
    return ExperimentResult(cfg, first.outer, list(range(1, E + 1)), list(cfg.ritz_indices),
                            mean_error, bmean, bmin, bmax, fcount, cheb)


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None,
                   initial_block=None) -> ExperimentResult:
    """Run ``cfg.trials`` seeded trials and aggregate them in trial order.

    Trial ``j`` draws its start block from seed ``cfg.seed + j``. With
    ``jobs > 1`` trials run in worker processes; the result does not depend
    on ``jobs``. ``initial_block`` (array or ``callable(problem, trial)``)
    replaces the random start and forces serial execution.
    """
    jobs = cfg.jobs if jobs is None else int(jobs)
    trials = range(cfg.trials)
    results = []
    if jobs <= 1 or cfg.trials == 1 or initial_block is not None:
        for j in trials:
            try:
                results.append(run_trial(cfg, j, initial_block))
            except Exception as exc:
                raise RuntimeError(f"trial {j} failed: {exc}") from exc
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            it = pool.map(_trial_worker, [(cfg, j) for j in trials],
                          chunksize=max(1, cfg.trials // (4 * jobs)))
            for j in trials:
                try:
                    results.append(next(it))
                except Exception as exc:
                    raise RuntimeError(f"trial {j} failed: {exc}") from exc
    return aggregate(cfg, results)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)) or np.isnan(x):
        return "NA"
    return "%.16e" % x


def csv_rows(res: ExperimentResult, minmax: bool = True):
    """Header and rows of the CSV table (strings)."""
    header = list(CSV_HEADER) + (list(CSV_EXTRA) if minmax else [])
    rows = []
    for e in range(len(res.inner)):
        for j, i in enumerate(res.ritz_indices):
            def b(d, name):
                return d[name][e, j] if name in d else math.nan
            flags = ";".join(f"{name}={int(res.flag_counts[name][e, j])}"
                             for name in BOUND_NAMES
                             if name in res.flag_counts and res.flag_counts[name][e, j])
            cheb = (res.chebyshev_mean_error[e, j] if res.chebyshev_mean_error is not None
                    else math.nan)
            row = [str(res.outer[e]), str(res.inner[e]), str(i), _fmt(res.mean_error[e, j]),
                   _fmt(b(res.bound_mean, "B1")), _fmt(b(res.bound_mean, "B2")),
                   _fmt(b(res.bound_mean, "B3")), _fmt(cheb), flags]
            if minmax:
                for name in BOUND_NAMES:
                    row += [_fmt(b(res.bound_min, name)), _fmt(b(res.bound_max, name))]
            rows.append(row)
    return header, rows


def emit_csv(res: ExperimentResult, path, minmax: bool = True):
    """Write the result table; numbers carry 17 significant digits, gaps ``NA``."""
    header, rows = csv_rows(res, minmax)
    text = ",".join(header) + "\n" + "".join(",".join(r) + "\n" for r in rows)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    """Parse an emitted CSV into ``{column: list}``; ``NA`` becomes ``nan``."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for line in lines[1:]:
        for h, v in zip(header, line.split(",")):
            if h in ("outer_step", "inner_step", "ritz_index"):
                cols[h].append(int(v))
            elif h == "flags":
                cols[h].append(v)
            else:
                cols[h].append(math.nan if v == "NA" else float(v))
    return cols


_CURVES = (("mean_error", "error", "with lines lt 1 lw 2"),
           ("bound1", "Bound1", "with lines lt 2 dt 2"),
           ("bound2", "Bound2", "with lines lt 3 dt 3"),
           ("bound3", "Bound3", "with lines lt 4 dt 4"),
           ("chebyshev_mean_error", "Chebyshev", "with points lt 5 pt 6"))


def emit_plot_script(res: ExperimentResult, path, csv_path="results.csv", output=None):
    """Write a gnuplot script with one log-scale panel per Ritz index."""
    if output is None:
        output = os.path.splitext(os.path.basename(str(path)))[0] + ".png"
    npanel = len(res.ritz_indices)
    present = {"mean_error": True, "bound1": "B1" in res.bound_mean,
               "bound2": "B2" in res.bound_mean, "bound3": "B3" in res.bound_mean,
               "chebyshev_mean_error": res.chebyshev_mean_error is not None}
    lines = [
        "# error and bound curves per Ritz index",
        'set datafile separator ","',
        'set datafile missing "NA"',
        "set datafile columnheaders",
        f"set terminal pngcairo size {420 * npanel},400",
        f'set output "{output}"',
        "set logscale y",
        'set format y "10^{%L}"',
        'set xlabel "inner step"',
        "set key bottom left",
        f"set multiplot layout 1,{npanel}",
    ]
    for i in res.ritz_indices:
        lines.append(f'set title "i={i}"')
        parts = []
        for col, title, style in _CURVES:
            if not present[col]:
                continue
            parts.append(f'"{csv_path}" using (column("inner_step")):'
                         f'(column("ritz_index")=={i} ? column("{col}") : 1/0)'
                         f' {style} title "{title}"')
        lines.append("plot " + ", \\\n     ".join(parts))
    lines.append("unset multiplot")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
