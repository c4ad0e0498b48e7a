"""Transition probabilities and causal contrasts on a fitted multistate model.

The survival function decomposes into the probability of being alive and
untreated, ``exp(-Lam01(s) - Lam02(s))``, plus the probability of being alive
and treated, an integral over treatment times ``u`` of

    exp(-Lam01(u-) - Lam02(u-)) * dLam01(u) * exp(-[Lam12(s|u) - Lam12(u|u)])

where ``Lam12`` increments are taken over ``(u, s]`` on the diagnosis clock.
With semi-parametrically fitted hazards the treatment intensity is a sum of
point masses at the Breslow jump times, so the integral is evaluated exactly
as a sum over those jumps (data-aligned rectangular rule); no additional grid
is involved.

A stochastic intervention replaces the initial->treated intensity with the
one fitted for a chosen exposure group while every death intensity keeps the
profile's own exposure.  The total effect, the residual (direct) contrast
under that intervention, and the mediator-shift (indirect) contrast are all
assembled from three survival evaluations sharing the intervened middle term,
so the decomposition ``te = sde + sie`` holds to floating-point accuracy.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import cox
from .dataset import (
    CovariateSpec,
    TransitionTable,
    ValidatedDataset,
    design_matrix,
    transition_tables,
)


class ExtrapolationWarning(UserWarning):
    """Evaluation beyond the last observed event time of some transition; step
    functions are held constant there."""


class PositivityWarning(UserWarning):
    """The intervention draws from an exposure group with no observed
    treatment events."""


class DivisionByNullEffect(ZeroDivisionError):
    """Proportion eliminated is undefined when the total effect is null."""


@dataclass(frozen=True)
class CovariateProfile:
    """The conditioning set (exposure, severity, confounders) of one contrast."""

    a: int
    x: float
    c: tuple[float, ...] = ()

    def with_exposure(self, a: int) -> "CovariateProfile":
        return replace(self, a=int(a))


@dataclass(frozen=True)
class InterventionPolicy:
    """Which exposure group's fitted treatment intensity drives the draw."""

    source_exposure: int
    tag: str = "shifted"

    def __post_init__(self):
        if self.source_exposure not in (0, 1):
            raise ValueError("source_exposure must be 0 or 1")

    @classmethod
    def natural(cls, a: int) -> "InterventionPolicy":
        return cls(source_exposure=int(a), tag="natural")


@dataclass(frozen=True)
class MultistateFit:
    """The three per-transition fits plus covariate-specification metadata."""

    fits: Mapping[str, cox.CoxFit]
    spec: CovariateSpec
    n_subjects: int
    treatment_events_by_group: tuple[int, int] = (0, 0)

    def fit(self, transition: str) -> cox.CoxFit:
        return self.fits[transition]

    @property
    def last_event_times(self) -> dict[str, float]:
        return {tr: f.baseline.last_time for tr, f in self.fits.items()}


def fit_multistate(ds: ValidatedDataset, spec: CovariateSpec,
                   force_null_02: bool = False, tol: float = 1e-9,
                   max_iter: int = 50) -> MultistateFit:
    """Expand a validated dataset and fit all three transitions.

    A transition with no events (possible for initial->dead when no subject
    dies untreated, and for the treated transitions in degenerate inputs)
    yields a null fit with an identically-zero hazard instead of an error.
    ``force_null_02`` drops the initial->dead path from the model regardless
    of the data, which is how the naive comparison strategies operate.
    """
    tables = transition_tables(ds, spec)
    fits: dict[str, cox.CoxFit] = {}
    for tr, table in tables.items():
        if (tr == "02" and force_null_02) or table.n_events == 0:
            fits[tr] = cox.CoxFit.null(tr, table.columns)
        else:
            fits[tr] = cox.fit_partial_likelihood(table, tol=tol, max_iter=max_iter)
    treated = ds.delta_t == 1
    by_group = (int((treated & (ds.a == 0)).sum()), int((treated & (ds.a == 1)).sum()))
    return MultistateFit(fits=fits, spec=spec, n_subjects=ds.n,
                         treatment_events_by_group=by_group)


def _profile_z(fit: MultistateFit, transition: str, prof: CovariateProfile,
               tprime=None) -> np.ndarray:
    z, _ = design_matrix(fit.spec.terms(transition), prof.a, prof.x,
                         np.asarray(prof.c, dtype=float).reshape(1, -1),
                         tprime=tprime, categorical=fit.spec.categorical)
    return z


def _check_horizon(fit: MultistateFit, s_max: float) -> None:
    stale = [tr for tr, f in fit.fits.items()
             if not f.is_null and s_max > f.baseline.last_time]
    if stale:
        warnings.warn(
            f"evaluation at s={s_max:g} extrapolates beyond the last event time of "
            f"transition(s) {', '.join(sorted(stale))}; hazards held constant",
            ExtrapolationWarning,
            stacklevel=3,
        )


def state_probabilities(fit: MultistateFit, prof: CovariateProfile,
                        policy: InterventionPolicy, s) -> tuple[np.ndarray, np.ndarray]:
    """Occupation probabilities of the initial and treated states at times ``s``.

    The treatment intensity is evaluated at the policy's source exposure;
    both death intensities keep the profile's own exposure.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr <= 0):
        raise ValueError("evaluation times must be positive")
    _check_horizon(fit, float(s_arr.max()))

    fit01, fit02, fit12 = fit.fit("01"), fit.fit("02"), fit.fit("12")
    src_prof = prof.with_exposure(policy.source_exposure)
    e01 = float(np.exp(fit01.beta @ _profile_z(fit, "01", src_prof)[0]))
    e02 = float(np.exp(fit02.beta @ _profile_z(fit, "02", prof)[0]))

    lam01_s = fit01.baseline(s_arr) * e01
    lam02_s = fit02.baseline(s_arr) * e02
    p_untreated = np.exp(-(lam01_s + lam02_s))

    jumps = fit01.baseline.jump_times
    if jumps.size == 0:
        p_treated = np.zeros_like(s_arr)
    else:
        d01 = fit01.baseline.increments * e01
        surv_before = np.exp(-(fit01.baseline.left_limit(jumps) * e01
                               + fit02.baseline.left_limit(jumps) * e02))
        z12 = _profile_z(fit, "12", prof, tprime=jumps)
        e12 = np.exp(z12 @ fit12.beta)
        base12_at_jump = fit12.baseline(jumps)
        base12_at_s = fit12.baseline(s_arr)
        # rows: evaluation times, cols: treatment-time atoms in (0, s]
        resid = np.exp(-np.maximum(base12_at_s[:, None] - base12_at_jump[None, :], 0.0)
                       * e12[None, :])
        contrib = (d01 * surv_before)[None, :] * resid
        mask = jumps[None, :] <= s_arr[:, None]
        p_treated = np.where(mask, contrib, 0.0).sum(axis=1)

    if np.isscalar(s) or np.asarray(s).ndim == 0:
        return float(p_untreated[0]), float(p_treated[0])
    return p_untreated, p_treated


def prob_alive_untreated(fit: MultistateFit, prof: CovariateProfile,
                         policy: InterventionPolicy, s):
    """Probability of still occupying the initial state at ``s``."""
    return state_probabilities(fit, prof, policy, s)[0]


def prob_alive_treated(fit: MultistateFit, prof: CovariateProfile,
                       policy: InterventionPolicy, s, grid_step: float | None = None):
    """Probability of being alive in the treated state at ``s``.

    ``grid_step`` is accepted for interface symmetry with curve reporting; the
    integral itself is always evaluated on the fitted jump times, which is
    exact for step-function hazards.
    """
    del grid_step
    return state_probabilities(fit, prof, policy, s)[1]


def survival(fit: MultistateFit, prof: CovariateProfile,
             policy: InterventionPolicy, s):
    p0, p1 = state_probabilities(fit, prof, policy, s)
    return p0 + p1


def _check_positivity(fit: MultistateFit, source: int) -> None:
    if fit.treatment_events_by_group[source] == 0:
        warnings.warn(
            f"exposure group {source} has no observed treatment events; the "
            "intervened treatment intensity is unsupported there",
            PositivityWarning,
            stacklevel=3,
        )


def effect_contrasts(fit: MultistateFit, s, prof_template: CovariateProfile,
                     source: int = 0, negate_sie: bool = False):
    """Total, direct, and indirect contrasts at times ``s``.

    Returns ``(te, sde, sie)``.  ``sde`` compares the exposed group under the
    source group's treatment intensity against the unexposed group; ``sie``
    compares the exposed group under its own versus the source group's
    treatment intensity.  Both reuse the same intervened survival evaluation,
    so ``te - sde - sie`` vanishes identically.
    """
    _check_positivity(fit, source)
    prof1 = prof_template.with_exposure(1)
    prof0 = prof_template.with_exposure(0)
    s_exposed = survival(fit, prof1, InterventionPolicy.natural(1), s)
    s_unexposed = survival(fit, prof0, InterventionPolicy.natural(0), s)
    s_intervened = survival(fit, prof1, InterventionPolicy(source), s)
    te = s_exposed - s_unexposed
    sde = s_intervened - s_unexposed
    sie = s_exposed - s_intervened
    if negate_sie:
        sie = -sie
    return te, sde, sie


def total_effect(fit: MultistateFit, prof_template: CovariateProfile, s):
    """Exposure-group survival difference at ``s`` (exposed minus unexposed)."""
    prof1 = prof_template.with_exposure(1)
    prof0 = prof_template.with_exposure(0)
    return (survival(fit, prof1, InterventionPolicy.natural(1), s)
            - survival(fit, prof0, InterventionPolicy.natural(0), s))


def stochastic_direct_effect(fit: MultistateFit, s, prof_template: CovariateProfile,
                             source: int = 0):
    """Residual survival difference after equalizing the treatment-time
    distribution to the source group's."""
    return effect_contrasts(fit, s, prof_template, source=source)[1]


def stochastic_indirect_effect(fit: MultistateFit, s, prof_template: CovariateProfile,
                               source: int = 0, negate: bool = False):
    """Survival change in the exposed group from shifting its treatment-time
    distribution to the source group's."""
    return effect_contrasts(fit, s, prof_template, source=source, negate_sie=negate)[2]


def rmst_total_effect(fit: MultistateFit, prof_template: CovariateProfile,
                      r: float, grid_step: float = 0.5) -> float:
    """Difference in restricted mean survival time up to horizon ``r``,
    integrated by the rectangular rule on ``grid_step``."""
    if r <= 0 or grid_step <= 0:
        raise ValueError("horizon and grid step must be positive")
    grid = _time_grid(r, grid_step)
    return float(np.sum(total_effect(fit, prof_template, grid)) * grid_step)


def proportion_eliminated(te: float, sde: float) -> float:
    """Share of the total effect removed by the intervention: ``(te-sde)/te``."""
    if abs(te) < 1e-12:
        raise DivisionByNullEffect("total effect is null; proportion eliminated undefined")
    return (te - sde) / te


def _time_grid(horizon: float, grid_step: float) -> np.ndarray:
    m = int(round(horizon / grid_step))
    if m < 1 or abs(m * grid_step - horizon) > 1e-9 * max(1.0, horizon):
        m = max(1, int(np.ceil(horizon / grid_step - 1e-12)))
    return np.arange(1, m + 1) * grid_step


@dataclass(frozen=True)
class EffectCurve:
    """Contrasts on a reporting grid, with optional bootstrap bands."""

    grid: np.ndarray
    te: np.ndarray
    sde: np.ndarray
    sie: np.ndarray
    bands: Mapping[str, tuple[np.ndarray, np.ndarray]] | None = None
    rmst_te: float | None = None
    rmst_horizon: float | None = None
    pe: float | None = None
    pe_horizon: float | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.size == 0 or g[0] <= 0 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be increasing and start after 0")
        for name in ("te", "sde", "sie"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != g.shape:
                raise ValueError(f"{name} has wrong shape")
            if np.any(np.abs(v) > 1.0 + 1e-9):
                raise ValueError(f"{name} outside [-1, 1]")

    def value_at(self, s: float, which: str = "te") -> float:
        idx = int(np.argmin(np.abs(self.grid - s)))
        if abs(self.grid[idx] - s) > 1e-9:
            raise KeyError(f"s={s} not on the curve grid")
        return float(getattr(self, which)[idx])

    def to_csv(self, path, comments: Sequence[str] = ()) -> None:
        """Write ``s,te,sde,sie[,te_lo,te_hi,sde_lo,sde_hi,sie_lo,sie_hi]``."""
        header = ["s", "te", "sde", "sie"]
        cols = [self.grid, self.te, self.sde, self.sie]
        if self.bands:
            for eff in ("te", "sde", "sie"):
                lo, hi = self.bands[eff]
                header += [f"{eff}_lo", f"{eff}_hi"]
                cols += [lo, hi]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.grid.shape[0]):
                writer.writerow([repr(float(col[i])) for col in cols])


def effect_curve(fit: MultistateFit, horizon: float, grid_step: float,
                 prof_template: CovariateProfile, source: int = 0,
                 negate_sie: bool = False, rmst_horizon: float | None = None,
                 pe_horizon: float | None = None) -> EffectCurve:
    """Evaluate the three contrasts on ``{grid_step, 2*grid_step, ..., horizon}``."""
    if horizon <= 0 or grid_step <= 0:
        raise ValueError("horizon and grid step must be positive")
    grid = _time_grid(horizon, grid_step)
    te, sde, sie = effect_contrasts(fit, grid, prof_template, source=source,
                                    negate_sie=negate_sie)
    rmst = pe = None
    if rmst_horizon is not None:
        rmst = rmst_total_effect(fit, prof_template, rmst_horizon, grid_step)
    if pe_horizon is not None:
        te_h, sde_h, _ = effect_contrasts(fit, float(pe_horizon), prof_template,
                                          source=source)
        pe = proportion_eliminated(float(te_h), float(sde_h))
    return EffectCurve(grid=grid, te=np.asarray(te), sde=np.asarray(sde),
                       sie=np.asarray(sie), rmst_te=rmst, rmst_horizon=rmst_horizon,
                       pe=pe, pe_horizon=pe_horizon)


def marginal_effect_curve(fit: MultistateFit, profiles: Sequence[CovariateProfile],
                          horizon: float, grid_step: float, source: int = 0,
                          negate_sie: bool = False) -> EffectCurve:
    """Contrasts averaged over an empirical covariate distribution.

    This is a population-level summary over the supplied ``(x, c)`` profiles
    (exposure fields are overridden per contrast arm); it is reported
    separately from the profile-specific curves and is O(len(profiles))
    slower.
    """
    if not profiles:
        raise ValueError("at least one profile is required")
    grid = _time_grid(horizon, grid_step)
    te = np.zeros_like(grid)
    sde = np.zeros_like(grid)
    sie = np.zeros_like(grid)
    for prof in profiles:
        t, d, i = effect_contrasts(fit, grid, prof, source=source, negate_sie=negate_sie)
        te += t
        sde += d
        sie += i
    m = float(len(profiles))
    return EffectCurve(grid=grid, te=te / m, sde=sde / m, sie=sie / m)


def profiles_from_dataset(ds: ValidatedDataset) -> list[CovariateProfile]:
    """Observed ``(x, c)`` profiles for empirical-distribution averaging."""
    return [CovariateProfile(a=int(ds.a[i]), x=float(ds.x[i]), c=tuple(ds.c[i]))
            for i in range(ds.n)]


def default_profile(ds: ValidatedDataset) -> CovariateProfile:
    """Data-centered reporting profile: median severity, mean confounders."""
    x_med = float(np.median(ds.x))
    observed = np.unique(ds.x)
    x_val = float(observed[np.argmin(np.abs(observed - x_med))])
    return CovariateProfile(a=0, x=x_val, c=tuple(np.mean(ds.c, axis=0)) if ds.c.size else ())
