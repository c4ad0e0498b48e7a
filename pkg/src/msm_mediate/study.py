"""Estimator-comparison study: multistate versus naive strategies.

Three estimation strategies are compared on semi-competing-risks data:

* ``multistate``: all subjects, all three transitions modeled.
* ``exclude``: subjects whose terminal event preceded treatment are dropped
  from the analytic sample and the initial->dead path is forced null.
* ``censor``: those subjects are kept but recoded as censored, and the
  initial->dead path is forced null.

On data with no such subjects the three strategies coincide.  Monte Carlo
replicates and bootstrap resamples draw their randomness from substreams
keyed by (experiment seed, purpose, replicate, bootstrap index), so results
are identical for any degree of parallelism.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from . import cox, effects, simgen
from .dataset import CovariateSpec, ValidatedDataset
from .effects import CovariateProfile, EffectCurve, ExtrapolationWarning
from .simgen import Scenario, TruthTable

EFFECTS = ("te", "sde", "sie")

_DATASET_STREAM = 2
_BOOTSTRAP_STREAM = 3


class Method(str, Enum):
    MULTISTATE = "multistate"
    EXCLUDE = "exclude"
    CENSOR = "censor"


class NoTreatedSubjectsError(ValueError):
    pass


class BootstrapError(RuntimeError):
    pass


def _as_method(method) -> Method:
    return method if isinstance(method, Method) else Method(str(method))


def _prepare(method: Method, ds: ValidatedDataset) -> tuple[ValidatedDataset, bool]:
    if method is Method.MULTISTATE:
        return ds, False
    if method is Method.EXCLUDE:
        keep = ~((ds.delta_s == 1) & (ds.delta_t == 0))
        reduced = ds.subset(np.flatnonzero(keep))
        if reduced.n == 0 or not np.any(reduced.delta_t == 1):
            raise NoTreatedSubjectsError("no treated subjects")
        return reduced, True
    return ds.with_terminal_recoded_as_censoring(), True


def fit_for_method(method, ds: ValidatedDataset, spec: CovariateSpec,
                   tol: float = 1e-9, max_iter: int = 50) -> effects.MultistateFit:
    method = _as_method(method)
    prepared, force_null = _prepare(method, ds)
    return effects.fit_multistate(prepared, spec, force_null_02=force_null,
                                  tol=tol, max_iter=max_iter)


def estimate(method, ds: ValidatedDataset, spec: CovariateSpec,
             s_grid: Sequence[float], profile: CovariateProfile,
             source: int = 0, negate_sie: bool = False) -> EffectCurve:
    """Point estimates of the three contrasts at ``s_grid`` under one strategy.

    Evaluation at the study horizon routinely sits past the last observed
    event time (administrative censoring), so extrapolation warnings are
    suppressed here; hazards are held constant beyond their last jump either
    way.
    """
    msfit = fit_for_method(method, ds, spec)
    s_arr = np.asarray(list(s_grid), dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        te, sde, sie = effects.effect_contrasts(msfit, s_arr, profile, source=source,
                                                negate_sie=negate_sie)
    return EffectCurve(grid=s_arr, te=np.atleast_1d(te), sde=np.atleast_1d(sde),
                       sie=np.atleast_1d(sie))


@dataclass(frozen=True)
class BootstrapResult:
    """Percentile bands over subject-level resamples."""

    s: np.ndarray
    level: float
    lower: Mapping[str, np.ndarray]
    upper: Mapping[str, np.ndarray]
    samples: Mapping[str, np.ndarray]  # (n_successful, len(s)) per effect
    n_failed: int
    n_total: int

    @property
    def unreliable(self) -> bool:
        return self.n_failed > 0.1 * self.n_total


def bootstrap_ci(ds: ValidatedDataset, method, spec: CovariateSpec,
                 s_list: Sequence[float], B: int, seed, level: float = 0.95,
                 profile: CovariateProfile | None = None, source: int = 0,
                 negate_sie: bool = False) -> BootstrapResult:
    """Percentile bootstrap over whole-subject resamples.

    Resamples with failed fits are dropped and counted; more than 10% failures
    flags the interval as unreliable, and all-failures is an error.  The
    resample draws depend only on ``seed`` and the replicate index, so
    intervals at different levels nest.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    method = _as_method(method)
    if profile is None:
        profile = effects.default_profile(ds)
    s_arr = np.asarray(list(s_list), dtype=float)
    draws: dict[str, list[np.ndarray]] = {eff: [] for eff in EFFECTS}
    n_failed = 0
    for b in range(B):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(_seed_tuple(seed) + (_BOOTSTRAP_STREAM, b))))
        idx = rng.integers(0, ds.n, size=ds.n)
        try:
            curve = estimate(method, ds.subset(idx), spec, s_arr, profile,
                             source=source, negate_sie=negate_sie)
        except (cox.CoxError, NoTreatedSubjectsError):
            n_failed += 1
            continue
        for eff in EFFECTS:
            draws[eff].append(getattr(curve, eff))
    if n_failed == B:
        raise BootstrapError("all bootstrap replicates failed")
    samples = {eff: np.vstack(draws[eff]) for eff in EFFECTS}
    alpha = 100.0 * (1.0 - level) / 2.0
    lower = {eff: np.percentile(samples[eff], alpha, axis=0) for eff in EFFECTS}
    upper = {eff: np.percentile(samples[eff], 100.0 - alpha, axis=0) for eff in EFFECTS}
    return BootstrapResult(s=s_arr, level=level, lower=lower, upper=upper,
                           samples=samples, n_failed=n_failed, n_total=B)


@dataclass(frozen=True)
class ReplicateResult:
    """One analyzed dataset under one strategy."""

    method: str
    scenario_id: int
    replicate: int
    seed: int
    s: np.ndarray
    estimates: Mapping[str, np.ndarray]
    ci_lower: Mapping[str, np.ndarray] | None
    ci_upper: Mapping[str, np.ndarray] | None
    boot_failed: int
    boot_total: int
    unreliable_ci: bool
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def scenario_profile(sc: Scenario) -> CovariateProfile:
    return CovariateProfile(a=0, x=sc.eval_x, c=tuple(sc.eval_c))


def _seed_tuple(seed) -> tuple[int, ...]:
    if isinstance(seed, tuple):
        return tuple(int(v) for v in seed)
    return (int(seed),)


def run_replicate(sc: Scenario, n: int, B: int, methods: Sequence, seed: int,
                  replicate: int, s_list: Sequence[float] = (24.0,),
                  level: float = 0.95, source: int = 0,
                  spec: CovariateSpec | None = None) -> list[ReplicateResult]:
    """Generate one dataset and analyze it under every requested strategy."""
    spec = spec or simgen.fitting_spec(sc)
    profile = scenario_profile(sc)
    ds = simgen.generate(sc, n, seed=_seed_tuple(seed) + (_DATASET_STREAM, replicate))
    s_arr = np.asarray(list(s_list), dtype=float)
    out: list[ReplicateResult] = []
    for method in [_as_method(m) for m in methods]:
        try:
            curve = estimate(method, ds, spec, s_arr, profile, source=source)
            boot = None
            if B > 0:
                boot = bootstrap_ci(ds, method, spec, s_arr, B,
                                    seed=_seed_tuple(seed) + (replicate,),
                                    level=level, profile=profile, source=source)
            out.append(ReplicateResult(
                method=method.value, scenario_id=sc.id, replicate=replicate,
                seed=_seed_tuple(seed)[0], s=s_arr,
                estimates={eff: np.atleast_1d(getattr(curve, eff)) for eff in EFFECTS},
                ci_lower=None if boot is None else boot.lower,
                ci_upper=None if boot is None else boot.upper,
                boot_failed=0 if boot is None else boot.n_failed,
                boot_total=B,
                unreliable_ci=False if boot is None else boot.unreliable,
            ))
        except (cox.CoxError, NoTreatedSubjectsError, BootstrapError) as exc:
            out.append(ReplicateResult(
                method=method.value, scenario_id=sc.id, replicate=replicate,
                seed=_seed_tuple(seed)[0], s=s_arr,
                estimates={}, ci_lower=None, ci_upper=None,
                boot_failed=0, boot_total=B, unreliable_ci=False,
                error=f"{method.value}: {exc}",
            ))
    return out


def _replicate_task(args) -> list[ReplicateResult]:
    return run_replicate(*args)


def run_experiment(sc: Scenario, n: int, R: int, B: int, methods: Sequence,
                   seed: int, s_list: Sequence[float] = (24.0,),
                   level: float = 0.95, source: int = 0,
                   spec: CovariateSpec | None = None,
                   n_jobs: int = 1) -> list[ReplicateResult]:
    """R independent replicates, each analyzed by every strategy.

    Deterministic for a given ``seed`` regardless of ``n_jobs``; per-replicate
    failures are recorded in the results, never fatal.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    tasks = [(sc, n, B, list(methods), seed, rep, list(s_list), level, source, spec)
             for rep in range(R)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(_replicate_task, tasks, chunksize=1))
    else:
        chunks = [_replicate_task(t) for t in tasks]
    return [res for chunk in chunks for res in chunk]


@dataclass(frozen=True)
class McSummary:
    """Monte Carlo performance of one (strategy, effect) pair at one time."""

    method: str
    effect: str
    s: float
    truth: float
    n_replicates: int
    n_ci: int
    mean_estimate: float
    bias: float
    variance: float
    mse: float
    coverage: float | None
    type1_error: float | None
    bootstrap_failures: int
    failed_replicates: int


def summarize(results: Sequence[ReplicateResult], truth: TruthTable,
              s: float) -> list[McSummary]:
    """Bias, coverage, MSE, and (for null effects) type-I error at time ``s``.

    The variance is the population variance over replicates, so
    ``mse = variance + bias**2`` holds exactly up to rounding.  An effect is
    treated as null when its true value is zero to within 1e-8, in which case
    the rejection rate of the nominal interval is reported.
    """
    if not results:
        raise ValueError("no results to summarize")
    methods = list(dict.fromkeys(r.method for r in results))
    out: list[McSummary] = []
    for method in methods:
        rows = [r for r in results if r.method == method]
        ok = [r for r in rows if not r.failed]
        n_failed = len(rows) - len(ok)
        for eff in EFFECTS:
            true_val = truth.value_at(s, eff)
            ests = np.array([_at(r, r.estimates[eff], s) for r in ok])
            with_ci = [r for r in ok if r.ci_lower is not None]
            lo = np.array([_at(r, r.ci_lower[eff], s) for r in with_ci])
            hi = np.array([_at(r, r.ci_upper[eff], s) for r in with_ci])
            coverage = float(np.mean((lo <= true_val) & (true_val <= hi))) \
                if with_ci else None
            is_null = abs(true_val) <= 1e-8
            type1 = float(np.mean((lo > 0.0) | (hi < 0.0))) \
                if (with_ci and is_null) else None
            bias = float(ests.mean() - true_val) if ests.size else float("nan")
            var = float(np.var(ests)) if ests.size else float("nan")
            mse = float(np.mean((ests - true_val) ** 2)) if ests.size else float("nan")
            out.append(McSummary(
                method=method, effect=eff, s=float(s), truth=true_val,
                n_replicates=len(ok), n_ci=len(with_ci),
                mean_estimate=float(ests.mean()) if ests.size else float("nan"),
                bias=bias, variance=var, mse=mse, coverage=coverage,
                type1_error=type1,
                bootstrap_failures=sum(r.boot_failed for r in ok),
                failed_replicates=n_failed,
            ))
    return out


def _at(result: ReplicateResult, values: np.ndarray, s: float) -> float:
    idx = int(np.argmin(np.abs(result.s - s)))
    if abs(result.s[idx] - s) > 1e-9:
        raise KeyError(f"s={s} was not evaluated")
    return float(values[idx])


# ---------------------------------------------------------------------------
# tidy CSV emission (one row per replicate x method x effect x s)
# ---------------------------------------------------------------------------

_REPLICATE_HEADER = ["replicate", "method", "effect", "s", "estimate", "ci_lo",
                     "ci_hi", "boot_failed", "boot_total", "unreliable_ci", "error"]


def write_replicates_csv(results: Sequence[ReplicateResult], path,
                         comments: Sequence[str] = ()) -> None:
    import csv as _csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = _csv.writer(fh)
        writer.writerow(_REPLICATE_HEADER)
        for r in results:
            if r.failed:
                writer.writerow([r.replicate, r.method, "", "", "", "", "",
                                 r.boot_failed, r.boot_total, int(r.unreliable_ci),
                                 r.error])
                continue
            for eff in EFFECTS:
                for i, s in enumerate(r.s):
                    lo = "" if r.ci_lower is None else repr(float(r.ci_lower[eff][i]))
                    hi = "" if r.ci_upper is None else repr(float(r.ci_upper[eff][i]))
                    writer.writerow([r.replicate, r.method, eff, repr(float(s)),
                                     repr(float(r.estimates[eff][i])), lo, hi,
                                     r.boot_failed, r.boot_total,
                                     int(r.unreliable_ci), ""])


def read_replicates_csv(path) -> list[ReplicateResult]:
    """Rebuild replicate results from the tidy CSV (used for resumable runs)."""
    import csv as _csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in _csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or rows[0] != _REPLICATE_HEADER:
        raise ValueError(f"{path}: unexpected replicate CSV header")
    grouped: dict[tuple[int, str], list[list[str]]] = {}
    for row in rows[1:]:
        grouped.setdefault((int(row[0]), row[1]), []).append(row)
    out: list[ReplicateResult] = []
    for (rep, method), items in sorted(grouped.items()):
        first = items[0]
        if first[10]:
            out.append(ReplicateResult(
                method=method, scenario_id=-1, replicate=rep, seed=-1,
                s=np.empty(0), estimates={}, ci_lower=None, ci_upper=None,
                boot_failed=int(first[7]), boot_total=int(first[8]),
                unreliable_ci=bool(int(first[9])), error=first[10]))
            continue
        s_vals = sorted({float(r[3]) for r in items})
        s_arr = np.asarray(s_vals)
        est = {eff: np.full(len(s_vals), np.nan) for eff in EFFECTS}
        has_ci = any(r[5] != "" for r in items)
        lo = {eff: np.full(len(s_vals), np.nan) for eff in EFFECTS} if has_ci else None
        hi = {eff: np.full(len(s_vals), np.nan) for eff in EFFECTS} if has_ci else None
        for r in items:
            i = s_vals.index(float(r[3]))
            est[r[2]][i] = float(r[4])
            if has_ci and r[5] != "":
                lo[r[2]][i] = float(r[5])
                hi[r[2]][i] = float(r[6])
        out.append(ReplicateResult(
            method=method, scenario_id=-1, replicate=rep, seed=-1, s=s_arr,
            estimates=est, ci_lower=lo, ci_upper=hi,
            boot_failed=int(first[7]), boot_total=int(first[8]),
            unreliable_ci=bool(int(first[9]))))
    return out


def write_summary_csv(summaries: Sequence[McSummary], path,
                      comments: Sequence[str] = ()) -> None:
    import csv as _csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = _csv.writer(fh)
        writer.writerow(["method", "effect", "s", "truth", "n_replicates", "n_ci",
                         "mean_estimate", "bias", "variance", "mse", "coverage",
                         "type1_error", "bootstrap_failures", "failed_replicates"])
        for m in summaries:
            writer.writerow([
                m.method, m.effect, repr(m.s), repr(m.truth), m.n_replicates, m.n_ci,
                repr(m.mean_estimate), repr(m.bias), repr(m.variance), repr(m.mse),
                "" if m.coverage is None else repr(m.coverage),
                "" if m.type1_error is None else repr(m.type1_error),
                m.bootstrap_failures, m.failed_replicates,
            ])
