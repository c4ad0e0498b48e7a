"""Synthetic illness-death data generation and exact effect computation.

A scenario fixes Weibull baseline hazards and log-linear covariate effects for
the three transitions, the covariate distributions, and the censoring scheme.
Latent event times are drawn by inverting each cumulative transition intensity
(independent latent clocks; the first event wins), the treated->dead time is
drawn on the diagnosis clock restricted to times after treatment, and
censoring is applied last.  The same parametric intensities also admit exact
(quadrature) evaluation of every causal contrast, which is what the Monte
Carlo study uses as ground truth.

Randomness comes from a counter-based generator (Philox) through a fixed
per-subject block of uniforms, so subject ``i`` of ``generate(sc, n, seed)``
is identical for every ``n > i`` and independent of scheduling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .dataset import CovariateSpec, ValidatedDataset, validate

_CALIBRATION_SEED = 773_201_129
_UNIFORM_EPS = 1e-12


class ScenarioError(ValueError):
    """Invalid scenario parameters or file contents."""


class UnreachableTargetError(RuntimeError):
    """The requested death-before-treatment fraction cannot be reached."""


class QuadratureError(RuntimeError):
    """Step-halving refinement did not converge."""


@dataclass(frozen=True)
class ConfounderSpec:
    kind: str  # "normal" or "bernoulli"
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in ("normal", "bernoulli"):
            raise ScenarioError(f"unknown confounder kind {self.kind!r}")
        if self.kind == "bernoulli" and not 0.0 <= self.param <= 1.0:
            raise ScenarioError("bernoulli parameter must be in [0, 1]")

    def draw(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "normal":
            return ndtri(u)
        return (u < self.param).astype(float)

    def spec_string(self) -> str:
        return "normal" if self.kind == "normal" else f"bernoulli:{self.param:g}"

    @classmethod
    def parse(cls, text: str) -> "ConfounderSpec":
        text = text.strip()
        if text == "normal":
            return cls("normal")
        m = re.match(r"^bernoulli:([0-9.eE+-]+)$", text)
        if not m:
            raise ScenarioError(f"cannot parse confounder spec {text!r}")
        return cls("bernoulli", float(m.group(1)))


@dataclass(frozen=True)
class TransitionModel:
    """Weibull baseline (cumulative hazard ``(t/scale)^shape``) with
    log-linear covariate effects keyed by model terms."""

    shape: float
    scale: float
    coef: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ScenarioError("Weibull shape and scale must be positive")

    def base_cum(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.power(np.maximum(t, 0.0) / self.scale, self.shape)

    def base_hazard(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return (self.shape / self.scale
                    * np.power(np.maximum(t, 0.0) / self.scale, self.shape - 1.0))

    def base_inverse(self, cum) -> np.ndarray:
        cum = np.asarray(cum, dtype=float)
        return self.scale * np.power(np.maximum(cum, 0.0), 1.0 / self.shape)


def _term_value(term: str, a, x, c, tprime=None):
    val = 1.0
    for factor in term.split("*"):
        if factor == "a":
            val = val * np.asarray(a, dtype=float)
        elif factor == "x":
            val = val * np.asarray(x, dtype=float)
        elif factor == "t":
            val = val * np.asarray(tprime, dtype=float)
        elif factor == "t^2":
            val = val * np.asarray(tprime, dtype=float) ** 2
        elif factor.startswith("c"):
            c2 = np.atleast_2d(np.asarray(c, dtype=float))
            val = val * c2[:, int(factor[1:]) - 1]
        else:
            raise ScenarioError(f"unknown term {factor!r}")
    return val


def linear_predictor(coef: Mapping[str, float], a, x, c, tprime=None):
    total = 0.0
    for term, value in coef.items():
        total = total + value * _term_value(term, a, x, c, tprime)
    return total


@dataclass(frozen=True)
class Scenario:
    """Complete generating mechanism for one simulation setting."""

    id: int
    label: str
    t01: TransitionModel
    t02: TransitionModel
    t12: TransitionModel
    exposure_prevalence: float = 0.5
    x_levels: int = 4
    confounders: tuple[ConfounderSpec, ...] = (ConfounderSpec("normal"),)
    admin_censor: float = 24.0
    dropout_max: float = 48.0
    direct_death_multiplier: float = 1.0
    eval_x: float = 1.0
    eval_c: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not 0.0 < self.exposure_prevalence < 1.0:
            raise ScenarioError("exposure prevalence must be in (0, 1)")
        if self.x_levels < 1:
            raise ScenarioError("x_levels must be >= 1")
        if self.direct_death_multiplier < 0:
            raise ScenarioError("direct-death multiplier must be nonnegative")
        if len(self.eval_c) != len(self.confounders):
            raise ScenarioError("eval.c length must match the confounder count")
        k = len(self.confounders)
        for tr_name, model in (("t01", self.t01), ("t02", self.t02), ("t12", self.t12)):
            for term in model.coef:
                for factor in term.split("*"):
                    if factor in ("t", "t^2") and tr_name != "t12":
                        raise ScenarioError(f"{tr_name} cannot carry mediator term {term!r}")
                    if factor.startswith("c") and factor not in ("", "c") \
                            and int(factor[1:]) > k:
                        raise ScenarioError(f"{tr_name} term {term!r} exceeds {k} confounder(s)")
        _check_structure(self)

    @property
    def n_confounders(self) -> int:
        return len(self.confounders)

    def eval_profile_fields(self) -> tuple[float, np.ndarray]:
        return self.eval_x, np.asarray(self.eval_c, dtype=float).reshape(1, -1)


def _has_exposure_term(model: TransitionModel) -> bool:
    return any("a" in term.split("*") for term in model.coef if model.coef[term] != 0.0)


def _check_structure(sc: Scenario) -> None:
    """Structural constraints for the four canonical study scenarios."""
    if sc.id not in (1, 2, 3, 4):
        return
    interaction = any(t in sc.t12.coef and sc.t12.coef[t] != 0.0 for t in ("a*t", "a*t^2"))
    if sc.id == 1 and interaction:
        raise ScenarioError("scenario 1 must not carry an exposure-mediator interaction")
    if sc.id == 2 and not interaction:
        raise ScenarioError("scenario 2 requires an exposure-mediator interaction")
    if sc.id == 3 and (_has_exposure_term(sc.t02) or _has_exposure_term(sc.t12)):
        raise ScenarioError("scenario 3 requires exposure-free death intensities")
    if sc.id == 3 and not _has_exposure_term(sc.t01):
        raise ScenarioError("scenario 3 requires an exposure effect on treatment timing")
    if sc.id == 4 and _has_exposure_term(sc.t01):
        raise ScenarioError("scenario 4 requires an exposure-free treatment intensity")
    if sc.id == 4 and not (_has_exposure_term(sc.t02) or _has_exposure_term(sc.t12)):
        raise ScenarioError("scenario 4 requires an exposure effect on a death intensity")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _seed_entropy(seed) -> tuple[int, ...]:
    if isinstance(seed, tuple):
        return tuple(int(v) for v in seed)
    return (int(seed),)


def _subject_uniforms(seed, n: int, width: int, stream: int = 0) -> np.ndarray:
    """An ``(n, width)`` block of uniforms; row ``i`` is subject ``i``'s
    substream (independent of ``n``)."""
    key = np.random.SeedSequence(_seed_entropy(seed) + (stream,))
    gen = np.random.Generator(np.random.Philox(key))
    u = gen.random((n, width))
    return np.clip(u, _UNIFORM_EPS, 1.0 - _UNIFORM_EPS)


def _draw_covariates(sc: Scenario, u: np.ndarray):
    a = (u[:, 0] < sc.exposure_prevalence).astype(int)
    x = np.minimum(np.floor(u[:, 1] * sc.x_levels), sc.x_levels - 1)
    c = np.column_stack([cf.draw(u[:, 2 + j]) for j, cf in enumerate(sc.confounders)]) \
        if sc.confounders else np.zeros((u.shape[0], 0))
    return a, x, c


def _latent_times(sc: Scenario, a_treat, a_death, x, c, e01, e02, e12):
    """Latent treatment, direct-death, and post-treatment death times.

    ``a_treat`` feeds the treatment intensity, ``a_death`` the two death
    intensities; they differ only under an intervened draw.
    """
    eta01 = linear_predictor(sc.t01.coef, a_treat, x, c)
    eta02 = linear_predictor(sc.t02.coef, a_death, x, c)
    t_treat = sc.t01.base_inverse(e01 * np.exp(-np.asarray(eta01, dtype=float)))
    mult = sc.direct_death_multiplier
    if mult == 0.0:
        t_direct = np.full_like(t_treat, np.inf)
    else:
        t_direct = sc.t02.base_inverse(e02 * np.exp(-np.asarray(eta02, dtype=float)) / mult)
    eta12 = linear_predictor(sc.t12.coef, a_death, x, c, tprime=t_treat)
    t_after = sc.t12.base_inverse(sc.t12.base_cum(t_treat)
                                  + e12 * np.exp(-np.asarray(eta12, dtype=float)))
    return t_treat, t_direct, t_after


def generate(sc: Scenario, n: int, seed: int, censoring: bool = True) -> ValidatedDataset:
    """Draw ``n`` subjects; deterministic given ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = sc.n_confounders
    u = _subject_uniforms(seed, n, k + 6)
    a, x, c = _draw_covariates(sc, u)
    exp_draws = -np.log1p(-u[:, k + 2: k + 5])
    t_treat, t_direct, t_after = _latent_times(sc, a, a, x, c,
                                               exp_draws[:, 0], exp_draws[:, 1],
                                               exp_draws[:, 2])
    if censoring:
        censor = np.full(n, sc.admin_censor)
        if sc.dropout_max > 0:
            censor = np.minimum(censor, sc.dropout_max * u[:, k + 5])
    else:
        censor = np.full(n, np.inf)

    treated = (t_treat < t_direct) & (t_treat < censor)
    death_time = np.where(t_treat < t_direct, t_after, t_direct)
    y_s = np.minimum(death_time, censor)
    delta_s = (death_time <= censor).astype(int)
    y_t = np.where(treated, t_treat, y_s)
    delta_t = treated.astype(int)

    ds = ValidatedDataset(
        ids=np.array([f"s{i:06d}" for i in range(n)], dtype=object),
        y_t=y_t, delta_t=delta_t, y_s=y_s, delta_s=delta_s,
        a=a, x=x, c=c,
    )
    return validate(ds)


def semicompeting_fraction_mc(sc: Scenario, n: int = 100_000,
                              seed: int = _CALIBRATION_SEED) -> float:
    """Pre-censoring fraction of subjects whose terminal event precedes the
    non-terminal one."""
    k = sc.n_confounders
    u = _subject_uniforms(seed, n, k + 6)
    a, x, c = _draw_covariates(sc, u)
    exp_draws = -np.log1p(-u[:, k + 2: k + 4])
    eta01 = linear_predictor(sc.t01.coef, a, x, c)
    eta02 = linear_predictor(sc.t02.coef, a, x, c)
    t_treat = sc.t01.base_inverse(exp_draws[:, 0] * np.exp(-np.asarray(eta01, dtype=float)))
    if sc.direct_death_multiplier == 0.0:
        return 0.0
    t_direct = sc.t02.base_inverse(
        exp_draws[:, 1] * np.exp(-np.asarray(eta02, dtype=float))
        / sc.direct_death_multiplier
    )
    return float(np.mean(t_direct <= t_treat))


def calibrate_semicompeting(sc: Scenario, target: float, n: int = 100_000,
                            tol: float = 0.005) -> Scenario:
    """Scale the direct-death baseline until the pre-censoring fraction of
    deaths-before-treatment hits ``target`` (monotone bisection on the hazard
    multiplier, common random numbers across iterations)."""
    if not 0.0 <= target <= 0.9:
        raise ValueError("target must be in [0, 0.9]")
    if target == 0.0:
        return replace(sc, direct_death_multiplier=0.0)

    def fraction(mult: float) -> float:
        return semicompeting_fraction_mc(replace(sc, direct_death_multiplier=mult), n=n)

    lo, hi = 0.0, max(sc.direct_death_multiplier, 1.0)
    for _ in range(60):
        if fraction(hi) >= target:
            break
        hi *= 2.0
        if hi > 1e12:
            raise UnreachableTargetError(
                f"cannot reach death-before-treatment fraction {target}"
            )
    else:
        raise UnreachableTargetError(f"cannot reach death-before-treatment fraction {target}")

    mid = hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        f = fraction(mid)
        if abs(f - target) <= tol:
            return replace(sc, direct_death_multiplier=mid)
        if f < target:
            lo = mid
        else:
            hi = mid
    raise UnreachableTargetError("bisection failed to settle within tolerance")


# ---------------------------------------------------------------------------
# exact effects under the generating hazards
# ---------------------------------------------------------------------------

def _adaptive_simpson(f, a: float, b: float, tol: float = 1e-8,
                      max_doublings: int = 16) -> float:
    """Composite Simpson with interval halving until successive refinements
    agree within ``tol``; ``f`` must accept node arrays."""
    if b <= a:
        return 0.0
    m = 8
    prev = None
    for _ in range(max_doublings + 1):
        x = np.linspace(a, b, m + 1)
        y = f(x)
        h = (b - a) / m
        val = float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        m *= 2
    raise QuadratureError(f"Simpson refinement did not converge on [{a}, {b}]")


class ParametricHazards:
    """Closed-form transition intensities of a scenario at a fixed profile.

    ``a_treat`` selects the exposure group feeding the treatment intensity
    (the intervened arm differs from ``a_death`` there); both death
    intensities use ``a_death``.
    """

    def __init__(self, sc: Scenario, a_death: int, a_treat: int | None = None):
        self.sc = sc
        x, c = sc.eval_profile_fields()
        self.a_death = a_death
        self.a_treat = a_death if a_treat is None else a_treat
        self.e01 = float(np.exp(linear_predictor(sc.t01.coef, self.a_treat, x, c)))
        self.e02 = float(np.exp(linear_predictor(sc.t02.coef, a_death, x, c)))
        self._x, self._c = x, c

    def cum01(self, t):
        return self.sc.t01.base_cum(t) * self.e01

    def haz01(self, t):
        return self.sc.t01.base_hazard(t) * self.e01

    def cum02(self, t):
        return self.sc.direct_death_multiplier * self.sc.t02.base_cum(t) * self.e02

    def relapse_factor(self, u):
        eta = linear_predictor(self.sc.t12.coef, self.a_death, self._x, self._c, tprime=u)
        return np.exp(np.asarray(eta, dtype=float))

    def cum12_between(self, u, s):
        return (self.sc.t12.base_cum(s) - self.sc.t12.base_cum(u)) * self.relapse_factor(u)

    def p_untreated(self, s):
        return np.exp(-(self.cum01(s) + self.cum02(s)))

    def p_treated(self, s: float, tol: float = 1e-8) -> float:
        """Integrates over treatment times under ``u = s * v**5``.

        The substitution absorbs the ``u**(shape-1)`` endpoint behavior of the
        treatment intensity into a smooth power of ``v`` (exponent
        ``5*shape - 1``), so Simpson refinement converges at machine-practical
        rates for any shape above 0.2.
        """
        s = float(s)
        if s <= 0.0:
            return 0.0
        sh, sc01 = self.sc.t01.shape, self.sc.t01.scale
        if 5.0 * sh - 1.0 < 0.0:
            raise QuadratureError("treatment-intensity shape below 0.2 is not supported")

        def integrand_v(v):
            u = s * v ** 5
            # alpha01(u) * du/dv with the v-powers combined analytically
            dens = (self.e01 * sh / sc01 * (s / sc01) ** (sh - 1.0)
                    * v ** (5.0 * sh - 1.0) * 5.0 * s)
            return (np.exp(-(self.cum01(u) + self.cum02(u))) * dens
                    * np.exp(-self.cum12_between(u, s)))

        return _adaptive_simpson(integrand_v, 0.0, 1.0, tol=tol)

    def survival(self, s: float, tol: float = 1e-8) -> float:
        return float(self.p_untreated(s)) + self.p_treated(s, tol=tol)


@dataclass(frozen=True)
class TruthTable:
    """Exact contrasts (and their survival terms) on a time grid."""

    scenario_id: int
    multiplier: float
    s: np.ndarray
    te: np.ndarray
    sde: np.ndarray
    sie: np.ndarray
    survival_exposed: np.ndarray
    survival_unexposed: np.ndarray
    survival_intervened: np.ndarray

    def value_at(self, s: float, effect: str) -> float:
        idx = int(np.argmin(np.abs(self.s - s)))
        if abs(self.s[idx] - s) > 1e-9:
            raise KeyError(f"s={s} not tabulated")
        return float(getattr(self, effect)[idx])


def true_effects(sc: Scenario, s_grid: Sequence[float], tol: float = 1e-8) -> TruthTable:
    """Exact contrasts at the scenario's evaluation profile.

    The three survival curves (exposed, unexposed, exposed-with-intervened
    treatment intensity) are computed by Simpson refinement on the generating
    hazards; contrasts are their differences, so the decomposition identity is
    exact by construction.
    """
    s_arr = np.asarray(list(s_grid), dtype=float)
    exposed = ParametricHazards(sc, a_death=1)
    unexposed = ParametricHazards(sc, a_death=0)
    intervened = ParametricHazards(sc, a_death=1, a_treat=0)
    s1 = np.array([exposed.survival(s, tol=tol) for s in s_arr])
    s0 = np.array([unexposed.survival(s, tol=tol) for s in s_arr])
    sg = np.array([intervened.survival(s, tol=tol) for s in s_arr])
    return TruthTable(
        scenario_id=sc.id, multiplier=sc.direct_death_multiplier, s=s_arr,
        te=s1 - s0, sde=sg - s0, sie=s1 - sg,
        survival_exposed=s1, survival_unexposed=s0, survival_intervened=sg,
    )


def state_occupancy_mc(sc: Scenario, a_death: int, a_treat: int | None,
                       s_values: Sequence[float], n_paths: int, seed: int):
    """Forward-simulated state-occupation frequencies at the evaluation profile.

    Independent cross-check of the quadrature in :func:`true_effects`: paths
    are sampled by intensity inversion, never by integrating the closed-form
    occupation formulas.  Returns ``(p_untreated, p_treated)`` arrays.
    """
    x_val, c_row = sc.eval_profile_fields()
    u = _subject_uniforms(seed, n_paths, 3, stream=1)
    e = -np.log1p(-u)
    a_treat = a_death if a_treat is None else a_treat
    a_t = np.full(n_paths, a_treat)
    a_d = np.full(n_paths, a_death)
    x = np.full(n_paths, x_val)
    c = np.repeat(c_row, n_paths, axis=0)
    t_treat, t_direct, t_after = _latent_times(sc, a_t, a_d, x, c,
                                               e[:, 0], e[:, 1], e[:, 2])
    s_arr = np.asarray(list(s_values), dtype=float)
    first = np.minimum(t_treat, t_direct)
    treated = t_treat < t_direct
    p0 = (first[None, :] > s_arr[:, None]).mean(axis=1)
    p1 = ((treated & (t_treat <= s_arr[:, None]) & (t_after > s_arr[:, None]))
          .mean(axis=1))
    return p0, p1


# ---------------------------------------------------------------------------
# scenario files (flat key-value format)
# ---------------------------------------------------------------------------

_SCALAR_KEYS = {
    "id", "label", "exposure_prevalence", "x_levels", "admin_censor",
    "dropout_max", "direct_death_multiplier", "eval.x", "eval.c", "confounders",
}


def dump_scenario(sc: Scenario) -> str:
    lines = [
        f"id = {sc.id}",
        f"label = {sc.label}",
        f"exposure_prevalence = {sc.exposure_prevalence:g}",
        f"x_levels = {sc.x_levels}",
        f"confounders = {', '.join(cf.spec_string() for cf in sc.confounders)}",
        f"admin_censor = {sc.admin_censor:g}",
        f"dropout_max = {sc.dropout_max:g}",
        f"direct_death_multiplier = {sc.direct_death_multiplier!r}",
        f"eval.x = {sc.eval_x:g}",
        f"eval.c = {', '.join(repr(v) for v in sc.eval_c)}",
    ]
    for name, model in (("t01", sc.t01), ("t02", sc.t02), ("t12", sc.t12)):
        lines.append(f"{name}.shape = {model.shape!r}")
        lines.append(f"{name}.scale = {model.scale!r}")
        for term in sorted(model.coef):
            lines.append(f"{name}.coef.{term} = {model.coef[term]!r}")
    return "\n".join(lines) + "\n"


def parse_scenario(text: str) -> Scenario:
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in kv:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        kv[key] = value

    def pop(key: str, default=None) -> str | None:
        return kv.pop(key, default)

    def pop_float(key: str, default: float | None = None) -> float:
        raw = pop(key)
        if raw is None:
            if default is None:
                raise ScenarioError(f"missing key {key!r}")
            return default
        return float(raw)

    models = {}
    for name in ("t01", "t02", "t12"):
        shape = pop_float(f"{name}.shape")
        scale = pop_float(f"{name}.scale")
        coef = {}
        for key in [k for k in kv if k.startswith(f"{name}.coef.")]:
            coef[key[len(name) + 6:]] = float(kv.pop(key))
        models[name] = TransitionModel(shape, scale, coef)

    conf_raw = pop("confounders", "")
    confounders = tuple(
        ConfounderSpec.parse(part) for part in conf_raw.split(",") if part.strip()
    ) if conf_raw else ()
    eval_c_raw = pop("eval.c", "")
    eval_c = tuple(float(part) for part in eval_c_raw.split(",") if part.strip()) \
        if eval_c_raw else ()

    admin_raw = pop("admin_censor", "24")
    sc = Scenario(
        id=int(pop("id", "0") or 0),
        label=pop("label", "custom") or "custom",
        t01=models["t01"], t02=models["t02"], t12=models["t12"],
        exposure_prevalence=pop_float("exposure_prevalence", 0.5),
        x_levels=int(pop_float("x_levels", 4)),
        confounders=confounders,
        admin_censor=float("inf") if admin_raw in ("inf", "none") else float(admin_raw),
        dropout_max=pop_float("dropout_max", 0.0),
        direct_death_multiplier=pop_float("direct_death_multiplier", 1.0),
        eval_x=pop_float("eval.x", 0.0),
        eval_c=eval_c,
    )
    if kv:
        raise ScenarioError(f"unknown scenario key(s): {', '.join(sorted(kv))}")
    return sc


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_scenario(sc))


def builtin_scenario(name: str) -> Scenario:
    """Load a packaged scenario by name (``s1`` .. ``s4``, ``cancors_like``)."""
    try:
        text = (resources.files("msm_mediate") / "scenarios" / f"{name}.kv").read_text()
    except FileNotFoundError:
        raise ScenarioError(f"no builtin scenario named {name!r}") from None
    return parse_scenario(text)


def list_builtin_scenarios() -> list[str]:
    folder = resources.files("msm_mediate") / "scenarios"
    return sorted(p.name[:-3] for p in folder.iterdir() if p.name.endswith(".kv"))


def fitting_spec(sc: Scenario) -> CovariateSpec:
    """Model terms an analyst would fit for data from this scenario.

    Always the full linear predictor in exposure, severity, and confounders
    (regardless of which generating coefficients are zero), plus the
    treatment-time term on the treated->dead transition; interaction and
    quadratic mediator terms are carried only when the scenario declares them.
    """
    base = ("a",) + (("x",) if sc.x_levels > 1 else ()) + tuple(
        f"c{j}" for j in range(1, sc.n_confounders + 1)
    )

    def interactions(model: TransitionModel) -> tuple[str, ...]:
        return tuple(sorted(
            term for term, v in model.coef.items()
            if v != 0.0 and "*" in term and term not in ("a*t", "a*t^2")
        ))

    mediator_terms = ["t"]
    for term in ("t^2", "a*t", "a*t^2"):
        if sc.t12.coef.get(term, 0.0) != 0.0:
            mediator_terms.append(term)

    return CovariateSpec(
        terms_01=base + interactions(sc.t01),
        terms_02=base + interactions(sc.t02),
        terms_12=base + interactions(sc.t12) + tuple(mediator_terms),
    )
