"""Proportional-intensity (Cox) fitting per transition.

Maximizes the delayed-entry partial likelihood with the Breslow tie
approximation and produces the Breslow cumulative baseline hazard as a
right-continuous step function.  The risk set at an event time ``t`` is
``{rows: entry < t <= exit}``, so left-truncated rows never contribute at or
before their entry time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import TransitionRow, TransitionTable


class CoxError(RuntimeError):
    pass


class NonConvergenceError(CoxError):
    """Newton-Raphson failed to converge within the iteration budget."""


class SingularInformationError(CoxError):
    """The observed information is rank deficient."""

    def __init__(self, column: int, label: str | None = None):
        self.column = column
        self.label = label
        name = f"{column}" if label is None else f"{column} ({label})"
        super().__init__(f"singular information matrix; offending column {name}")


class MonotoneLikelihoodError(CoxError):
    """The likelihood keeps increasing as a coefficient diverges."""

    def __init__(self, bound: float):
        super().__init__(f"monotone likelihood: |beta| exceeded {bound} with increasing loglik")


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous nondecreasing step function with value 0 before the
    first jump."""

    jump_times: np.ndarray
    cum_values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float)
        v = np.asarray(self.cum_values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("jump_times and cum_values must be 1-d of equal length")
        if t.size and (np.any(np.diff(t) <= 0) or np.any(np.diff(v) < -1e-15)):
            raise ValueError("jump times must be strictly increasing, values nondecreasing")
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "cum_values", v)

    @classmethod
    def empty(cls) -> "StepFunction":
        return cls(np.empty(0), np.empty(0))

    def __call__(self, t):
        """Evaluate at ``t`` (scalar or array), including any jump at ``t``."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        padded = np.concatenate(([0.0], self.cum_values))
        out = padded[idx]
        return float(out) if np.isscalar(t) else out

    def left_limit(self, t):
        """Evaluate just before ``t`` (excludes any jump exactly at ``t``)."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="left")
        padded = np.concatenate(([0.0], self.cum_values))
        out = padded[idx]
        return float(out) if np.isscalar(t) else out

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.cum_values, prepend=0.0)

    @property
    def last_time(self) -> float:
        return float(self.jump_times[-1]) if self.jump_times.size else 0.0


@dataclass(frozen=True)
class CoxFit:
    """Fitted proportional-intensity model for one transition."""

    transition: str
    beta: np.ndarray
    covariance: np.ndarray
    loglik: float
    baseline: StepFunction
    n_events: int
    converged: bool
    iterations: int
    columns: tuple[str, ...] = ()

    @classmethod
    def null(cls, transition: str, columns: Sequence[str] = ()) -> "CoxFit":
        """A no-information fit: zero coefficients, identically-zero hazard.

        Used for transitions with no rows or no events, and for estimation
        strategies that force the initial->dead path out of the model.
        """
        p = len(columns)
        return cls(transition, np.zeros(p), np.zeros((p, p)), 0.0,
                   StepFunction.empty(), 0, True, 0, tuple(columns))

    @property
    def is_null(self) -> bool:
        return self.baseline.jump_times.size == 0


def _as_table(rows) -> TransitionTable:
    if isinstance(rows, TransitionTable):
        return rows
    rows = list(rows)
    if not rows:
        raise ValueError("no rows supplied")
    tr = rows[0].transition
    if any(r.transition != tr for r in rows):
        raise ValueError("rows mix transitions; fit one transition at a time")
    return TransitionTable(
        transition=tr,
        entry=np.array([r.entry for r in rows], dtype=float),
        exit=np.array([r.exit for r in rows], dtype=float),
        status=np.array([r.status for r in rows], dtype=int),
        z=np.array([r.z for r in rows], dtype=float).reshape(len(rows), -1),
        columns=(),
        subject_index=np.arange(len(rows)),
    )


class _PartialLikelihood:
    """Precomputed structures for repeated (loglik, score, hessian) evaluation.

    Risk-set sums are suffix sums over rows sorted by exit and by entry:
    ``sum_{entry < t <= exit} f = sum_{exit >= t} f - sum_{entry >= t} f``,
    which holds because entry < exit for every row.  Suffix sums are taken as
    total-minus-prefix over contiguous presorted arrays, and the (w, w*z,
    w*z*z') moments share a single cumulative pass.
    """

    def __init__(self, table: TransitionTable):
        if np.any(table.entry >= table.exit):
            raise ValueError("every row must satisfy entry < exit")
        self.z = np.ascontiguousarray(table.z, dtype=float)
        self.n, self.p = self.z.shape
        events = table.status == 1
        if not np.any(events):
            raise ValueError("at least one event row is required")
        self.event_times, self.d = np.unique(table.exit[events], return_counts=True)
        self.d = self.d.astype(float)
        self.event_z_sum = self.z[events].sum(axis=0)
        self.event_rows = np.flatnonzero(events)

        self.order_exit = np.argsort(table.exit, kind="stable")
        exit_sorted = table.exit[self.order_exit]
        # first sorted position with exit >= t (resp. entry >= t)
        self.ix_exit = np.searchsorted(exit_sorted, self.event_times, side="left")
        self.z_exit = np.ascontiguousarray(self.z[self.order_exit])
        self.has_entries = bool(np.any(table.entry > 0.0))
        if self.has_entries:
            self.order_entry = np.argsort(table.entry, kind="stable")
            entry_sorted = table.entry[self.order_entry]
            self.ix_entry = np.searchsorted(entry_sorted, self.event_times, side="left")
            self.z_entry = np.ascontiguousarray(self.z[self.order_entry])
        self.risk_counts = (self.ix_entry if self.has_entries
                            else np.full(self.event_times.shape, self.n)) - self.ix_exit
        m = 1 + self.p + self.p * self.p
        self._block = np.empty((self.n, m))
        self._prefix = np.zeros((self.n + 1, m))
        self._prefix1 = np.zeros(self.n + 1)

    def _suffix1(self, sorted_values: np.ndarray, ix: np.ndarray) -> np.ndarray:
        np.cumsum(sorted_values, out=self._prefix1[1:])
        return self._prefix1[-1] - self._prefix1[ix]

    def risk_sums(self, w: np.ndarray) -> np.ndarray:
        out = self._suffix1(w[self.order_exit], self.ix_exit)
        if self.has_entries:
            out = out - self._suffix1(w[self.order_entry], self.ix_entry)
        return out

    def _packed_suffix(self, order_z, ix, eta_sorted):
        p = self.p
        block = self._block
        w = np.exp(eta_sorted)
        block[:, 0] = w
        wz = w[:, None] * order_z
        block[:, 1: 1 + p] = wz
        np.multiply(wz[:, :, None], order_z[:, None, :],
                    out=block[:, 1 + p:].reshape(self.n, p, p))
        np.cumsum(block, axis=0, out=self._prefix[1:])
        return self._prefix[-1] - self._prefix[ix]

    def _moments(self, eta: np.ndarray):
        """Risk-set sums of (w, w*z, w*z*z') at every event time."""
        p = self.p
        sums = self._packed_suffix(self.z_exit, self.ix_exit, eta[self.order_exit])
        if self.has_entries:
            sums = sums - self._packed_suffix(self.z_entry, self.ix_entry,
                                              eta[self.order_entry])
        j = sums.shape[0]
        return sums[:, 0], sums[:, 1: 1 + p], sums[:, 1 + p:].reshape(j, p, p)

    def loglik(self, beta: np.ndarray) -> float:
        if self.p == 0:
            return float(-self.d @ np.log(self.risk_counts))
        eta = self.z @ beta
        s0 = self.risk_sums(np.exp(eta))
        return float(eta[self.event_rows].sum() - self.d @ np.log(s0))

    def loglik_score_hessian(self, beta: np.ndarray):
        eta = self.z @ beta
        s0, s1, s2 = self._moments(eta)
        zbar = s1 / s0[:, None]
        ll = float(eta[self.event_rows].sum() - self.d @ np.log(s0))
        score = self.event_z_sum - self.d @ zbar
        hessian = (zbar * self.d[:, None]).T @ zbar \
            - np.einsum("j,jkl->kl", self.d / s0, s2)
        return ll, score, hessian

    def breslow_increments(self, beta: np.ndarray) -> np.ndarray:
        if self.p:
            s0 = self.risk_sums(np.exp(self.z @ beta))
        else:
            s0 = self.risk_counts.astype(float)
        return self.d / s0


def _offending_column(neg_hessian: np.ndarray) -> int:
    vals, vecs = np.linalg.eigh(neg_hessian)
    return int(np.argmax(np.abs(vecs[:, 0])))


def fit_partial_likelihood(rows, init: np.ndarray | None = None, tol: float = 1e-9,
                           max_iter: int = 50, beta_bound: float = 15.0) -> CoxFit:
    """Fit one transition by Newton-Raphson with step-halving.

    Convergence is declared when ``|delta loglik| / (|loglik| + 1) < tol``.
    Columns that are identically zero carry no information and are pinned at
    zero rather than treated as rank deficiencies.

    Raises
    ------
    NonConvergenceError, SingularInformationError, MonotoneLikelihoodError
    """
    table = _as_table(rows)
    columns = tuple(table.columns)
    if table.n_events < 1:
        raise ValueError("at least one event row is required")

    zero_cols = np.flatnonzero(np.all(table.z == 0.0, axis=0))
    active = np.flatnonzero(np.any(table.z != 0.0, axis=0))
    p_full = table.z.shape[1]
    if zero_cols.size:
        table = TransitionTable(table.transition, table.entry, table.exit, table.status,
                                np.ascontiguousarray(table.z[:, active]), columns,
                                table.subject_index)

    pl = _PartialLikelihood(table)
    p = pl.p

    if p == 0:
        ll = pl.loglik(np.zeros(0))
        baseline = _baseline_from(pl)
        beta_out = np.zeros(p_full)
        cov_out = np.zeros((p_full, p_full))
        return CoxFit(table.transition, beta_out, cov_out, ll, baseline,
                      int(pl.d.sum()), True, 0, columns)

    if init is None:
        beta = np.zeros(p)
    else:
        init = np.asarray(init, dtype=float)
        if init.shape != (p_full,):
            raise ValueError(f"init has wrong length (expected {p_full})")
        beta = init[active].copy()

    ll, score, hessian = pl.loglik_score_hessian(beta)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        try:
            delta = np.linalg.solve(-hessian, score)
        except np.linalg.LinAlgError:
            col = _offending_column(-hessian)
            col = int(active[col])
            raise SingularInformationError(col, columns[col] if columns else None) from None
        step = 1.0
        ll_new = -np.inf
        beta_new, score_new, hess_new = beta, score, hessian
        for _ in range(11):
            beta_new = beta + step * delta
            ll_new, score_new, hess_new = pl.loglik_score_hessian(beta_new)
            if ll_new >= ll:
                break
            step *= 0.5
        if not np.isfinite(ll_new):
            raise NonConvergenceError("log-likelihood became non-finite")
        if np.max(np.abs(beta_new)) > beta_bound and ll_new >= ll:
            raise MonotoneLikelihoodError(beta_bound)
        improved = ll_new >= ll
        done = abs(ll_new - ll) / (abs(ll) + 1.0) < tol
        if improved:
            beta, ll, score, hessian = beta_new, ll_new, score_new, hess_new
        if done:
            converged = True
            break
        if not improved:
            raise NonConvergenceError(
                f"step-halving failed to improve the log-likelihood at iteration {iterations}"
            )
    if not converged:
        raise NonConvergenceError(f"no convergence in {max_iter} iterations")

    try:
        cov = np.linalg.inv(-hessian)
    except np.linalg.LinAlgError:
        col = _offending_column(-hessian)
        col = int(active[col])
        raise SingularInformationError(col, columns[col] if columns else None) from None
    cov = (cov + cov.T) / 2.0

    baseline = _baseline_from(pl, beta)
    if zero_cols.size:
        beta_out = np.zeros(p_full)
        beta_out[active] = beta
        cov_out = np.zeros((p_full, p_full))
        cov_out[np.ix_(active, active)] = cov
    else:
        beta_out, cov_out = beta, cov
    return CoxFit(table.transition, beta_out, cov_out, ll, baseline,
                  int(pl.d.sum()), True, iterations, columns)


def _baseline_from(pl: _PartialLikelihood, beta: np.ndarray | None = None) -> StepFunction:
    inc = pl.breslow_increments(np.zeros(pl.p) if beta is None else beta)
    return StepFunction(pl.event_times.copy(), np.cumsum(inc))


def breslow_baseline(fit: CoxFit, rows) -> StepFunction:
    """Breslow cumulative baseline hazard at the fitted coefficients.

    ``Lam0(t) = sum_{event times tj <= t} d_j / sum_{risk set} exp(beta'z)``
    with ``d_j`` the tied-event count at ``tj``.
    """
    table = _as_table(rows)
    z = table.z
    nz = np.flatnonzero(np.any(z != 0.0, axis=0))
    beta = np.asarray(fit.beta, dtype=float)
    if beta.shape[0] != z.shape[1]:
        raise ValueError("coefficient/covariate dimension mismatch")
    if nz.size != z.shape[1]:
        table = TransitionTable(table.transition, table.entry, table.exit, table.status,
                                np.ascontiguousarray(z[:, nz]), table.columns,
                                table.subject_index)
        beta = beta[nz]
    pl = _PartialLikelihood(table)
    return _baseline_from(pl, beta)


def cumulative_hazard(fit: CoxFit, z, t):
    """``Lam(t|z) = Lam0(t) * exp(beta'z)`` for scalar or array ``t``."""
    z = np.asarray(z, dtype=float)
    if z.shape != fit.beta.shape:
        raise ValueError(f"covariate vector has shape {z.shape}, expected {fit.beta.shape}")
    return fit.baseline(t) * float(np.exp(fit.beta @ z))


def cumulative_hazard_between(fit: CoxFit, z, t_from, t_to):
    """Hazard increment over ``(t_from, t_to]`` times ``exp(beta'z)``.

    The left endpoint is exclusive, matching the delayed-entry risk-set
    convention: a jump exactly at ``t_from`` does not count.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != fit.beta.shape:
        raise ValueError(f"covariate vector has shape {z.shape}, expected {fit.beta.shape}")
    return (fit.baseline(t_to) - fit.baseline(t_from)) * float(np.exp(fit.beta @ z))
