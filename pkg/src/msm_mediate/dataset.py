"""Observed-data records, validation, and expansion into transition rows.

The observed data for one subject is ``(y_t, delta_t, y_s, delta_s, a, x, c)``:
the observation time and event indicator of the non-terminal event (treatment),
the observation time and event indicator of the terminal event (death), a
binary exposure, an ordinal severity score, and a vector of baseline
confounders.  Subjects are expanded into long-format rows for the three
transitions of the illness-death model:

* ``01`` initial -> treated         (entry 0, exit ``y_t``)
* ``02`` initial -> dead            (entry 0, exit ``y_t`` or ``y_s``)
* ``12`` treated -> dead            (entry ``y_t``, exit ``y_s``, present only
  when the treatment time was observed)

All times share the diagnosis clock; transition ``12`` rows are left-truncated
at the observed treatment time.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

TRANSITIONS = ("01", "02", "12")

#: Terms that are only meaningful on a treated->dead row (they are functions of
#: the observed treatment time t').
MEDIATOR_TERMS = frozenset({"t", "t^2"})

_TERM_RE = re.compile(r"^(a|x|t|t\^2|c[1-9][0-9]*)$")


class DatasetValidationError(ValueError):
    """Raised when subject records violate the observed-data invariants.

    ``problems`` is a list of ``(subject_id, reason)`` pairs covering every
    offending record, not just the first.
    """

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        preview = "; ".join(f"{sid}: {why}" for sid, why in problems[:8])
        more = "" if len(problems) <= 8 else f" (+{len(problems) - 8} more)"
        super().__init__(f"{len(problems)} invalid record(s): {preview}{more}")


class CsvFormatError(ValueError):
    """Raised on malformed dataset CSV input, listing offending line numbers."""


class CovariateSpecError(ValueError):
    """Raised when a covariate specification is internally inconsistent."""


@dataclass(frozen=True)
class SubjectRecord:
    """One observed individual."""

    id: str
    y_t: float
    delta_t: int
    y_s: float
    delta_s: int
    a: int
    x: float
    c: tuple[float, ...] = ()


@dataclass(frozen=True)
class TransitionRow:
    """One subject's contribution to one transition, in long format."""

    subject_id: str
    transition: str
    entry: float
    exit: float
    status: int
    z: tuple[float, ...] = ()


@dataclass(frozen=True)
class CategoricalCoding:
    """Dummy coding for one field: declared levels and the reference level.

    Levels are declared (not inferred from data) so the design matrix layout
    is identical across runs and bootstrap resamples.
    """

    levels: tuple[float, ...]
    reference: float

    def __post_init__(self):
        if self.reference not in self.levels:
            raise CovariateSpecError(
                f"reference level {self.reference} not among declared levels {self.levels}"
            )
        if len(set(self.levels)) != len(self.levels):
            raise CovariateSpecError(f"duplicate categorical levels: {self.levels}")

    @property
    def encoded(self) -> tuple[float, ...]:
        return tuple(l for l in self.levels if l != self.reference)


@dataclass(frozen=True)
class CovariateSpec:
    """Per-transition model terms.

    Terms are drawn from the grammar ``a``, ``x``, ``c<k>`` (1-based confounder
    index), the mediator-derived terms ``t`` and ``t^2`` (transition ``12``
    only), and ``*``-interactions such as ``a*t``, ``a*t^2`` or ``a*c2``.
    Fields listed in ``categorical`` are dummy-encoded against their declared
    reference level wherever they appear.
    """

    terms_01: tuple[str, ...] = ()
    terms_02: tuple[str, ...] = ()
    terms_12: tuple[str, ...] = ()
    categorical: Mapping[str, CategoricalCoding] = field(default_factory=dict)

    def __post_init__(self):
        for tr in ("01", "02"):
            for term in self.terms(tr):
                for factor in term.split("*"):
                    if factor in MEDIATOR_TERMS:
                        raise CovariateSpecError(
                            f"mediator term {term!r} is only permitted on transition 12, "
                            f"found on {tr}"
                        )
        for tr in TRANSITIONS:
            seen = set()
            for term in self.terms(tr):
                _check_term(term)
                if term in seen:
                    raise CovariateSpecError(f"duplicate term {term!r} on transition {tr}")
                seen.add(term)
        for fld in self.categorical:
            if not re.match(r"^(x|c[1-9][0-9]*)$", fld):
                raise CovariateSpecError(f"categorical coding declared for unknown field {fld!r}")

    def terms(self, transition: str) -> tuple[str, ...]:
        return {"01": self.terms_01, "02": self.terms_02, "12": self.terms_12}[transition]

    def max_confounder(self) -> int:
        idx = [0]
        for tr in TRANSITIONS:
            for term in self.terms(tr):
                for factor in term.split("*"):
                    if factor.startswith("c"):
                        idx.append(int(factor[1:]))
        for fld in self.categorical:
            if fld.startswith("c"):
                idx.append(int(fld[1:]))
        return max(idx)

    def to_json(self) -> str:
        obj = {
            "t01": list(self.terms_01),
            "t02": list(self.terms_02),
            "t12": list(self.terms_12),
        }
        if self.categorical:
            obj["categorical"] = {
                fld: {"levels": list(cc.levels), "reference": cc.reference}
                for fld, cc in self.categorical.items()
            }
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CovariateSpec":
        obj = json.loads(text)
        cat = {
            fld: CategoricalCoding(tuple(v["levels"]), v["reference"])
            for fld, v in obj.get("categorical", {}).items()
        }
        return cls(
            terms_01=tuple(obj.get("t01", ())),
            terms_02=tuple(obj.get("t02", ())),
            terms_12=tuple(obj.get("t12", ())),
            categorical=cat,
        )

    @classmethod
    def default(cls, n_confounders: int, include_x: bool = True,
                interaction: bool = False, quadratic: bool = False) -> "CovariateSpec":
        """Canonical linear specification: exposure, severity, confounders on
        every transition, plus the treatment time (and optionally its
        interaction with exposure and quadratic terms) on transition 12."""
        base = ("a",) + (("x",) if include_x else ()) + tuple(
            f"c{j}" for j in range(1, n_confounders + 1)
        )
        t12 = base + ("t",)
        if quadratic:
            t12 = t12 + ("t^2",)
        if interaction:
            t12 = t12 + ("a*t",)
            if quadratic:
                t12 = t12 + ("a*t^2",)
        return cls(terms_01=base, terms_02=base, terms_12=t12)


def _check_term(term: str) -> None:
    factors = term.split("*")
    if not factors or any(not _TERM_RE.match(f) for f in factors):
        raise CovariateSpecError(f"unknown term {term!r}")
    if len(factors) > 2:
        raise CovariateSpecError(f"term {term!r}: at most one interaction is supported")
    if len(factors) == 2 and factors[0] != "a":
        raise CovariateSpecError(f"term {term!r}: interactions must be of the form a*<field>")


def _factor_values(factor: str, a, x, c, tprime):
    if factor == "a":
        return [("", np.asarray(a, dtype=float))]
    if factor == "x":
        return [("", np.asarray(x, dtype=float))]
    if factor == "t":
        if tprime is None:
            raise CovariateSpecError("mediator term used without a treatment time")
        return [("", np.asarray(tprime, dtype=float))]
    if factor == "t^2":
        if tprime is None:
            raise CovariateSpecError("mediator term used without a treatment time")
        return [("", np.asarray(tprime, dtype=float) ** 2)]
    k = int(factor[1:])
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if k > c.shape[1]:
        raise CovariateSpecError(f"confounder {factor!r} not present (only {c.shape[1]} columns)")
    return [("", c[:, k - 1])]


def design_matrix(terms: Sequence[str], a, x, c, tprime=None,
                  categorical: Mapping[str, CategoricalCoding] | None = None,
                  ) -> tuple[np.ndarray, list[str]]:
    """Build the design matrix for one transition.

    Scalar inputs are broadcast; the result is ``(n, p)`` with one column per
    (possibly dummy-expanded) term, and the matching column labels.
    """
    categorical = categorical or {}
    a = np.atleast_1d(np.asarray(a, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n = max(a.shape[0], x.shape[0], c.shape[0],
            0 if tprime is None else np.atleast_1d(tprime).shape[0])
    if c.shape[0] == 1 and c.shape[1] == 0:
        c = np.zeros((n, 0))

    def broadcast(v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return np.broadcast_to(v, (n,)).astype(float, copy=False)

    cols: list[np.ndarray] = []
    labels: list[str] = []
    for term in terms:
        _check_term(term)
        factors = term.split("*")
        # expand the (single) non-exposure factor, dummy-coding if declared
        tail = factors[-1]
        if tail in categorical:
            coding = categorical[tail]
            (_, raw), = _factor_values(tail, a, x, c, tprime)
            raw = broadcast(raw)
            expanded = [(f"{tail}={_fmt_level(l)}", (raw == l).astype(float))
                        for l in coding.encoded]
        else:
            (_, raw), = _factor_values(tail, a, x, c, tprime)
            expanded = [(tail, broadcast(raw))]
        prefix = "" if len(factors) == 1 else "a*"
        amul = broadcast(a) if prefix else None
        for lab, vals in expanded:
            cols.append(vals * amul if amul is not None else vals)
            labels.append(prefix + lab)
    if not cols:
        return np.zeros((n, 0)), []
    return np.column_stack(cols), labels


def _fmt_level(level: float) -> str:
    return str(int(level)) if float(level).is_integer() else repr(level)


@dataclass(frozen=True)
class ValidatedDataset:
    """Column arrays for a set of validated subject records.

    Annotated with the counts the validators establish: ``n``, events per
    transition, and the semi-competing fraction (subjects whose terminal event
    was observed without the non-terminal one).
    """

    ids: np.ndarray
    y_t: np.ndarray
    delta_t: np.ndarray
    y_s: np.ndarray
    delta_s: np.ndarray
    a: np.ndarray
    x: np.ndarray
    c: np.ndarray

    @property
    def n(self) -> int:
        return self.y_t.shape[0]

    @property
    def n_confounders(self) -> int:
        return self.c.shape[1]

    @property
    def event_counts(self) -> dict[str, int]:
        treated = self.delta_t == 1
        return {
            "01": int(treated.sum()),
            "02": int(((self.delta_s == 1) & ~treated).sum()),
            "12": int(((self.delta_s == 1) & treated).sum()),
        }

    @property
    def semicompeting_fraction(self) -> float:
        return self.event_counts["02"] / self.n

    def records(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(
                id=str(self.ids[i]),
                y_t=float(self.y_t[i]),
                delta_t=int(self.delta_t[i]),
                y_s=float(self.y_s[i]),
                delta_s=int(self.delta_s[i]),
                a=int(self.a[i]),
                x=float(self.x[i]),
                c=tuple(float(v) for v in self.c[i]),
            )
            for i in range(self.n)
        ]

    def subset(self, index: np.ndarray) -> "ValidatedDataset":
        """Row subset/resample; invariants are preserved by construction."""
        index = np.asarray(index)
        return ValidatedDataset(
            ids=self.ids[index],
            y_t=self.y_t[index],
            delta_t=self.delta_t[index],
            y_s=self.y_s[index],
            delta_s=self.delta_s[index],
            a=self.a[index],
            x=self.x[index],
            c=self.c[index],
        )

    def with_terminal_recoded_as_censoring(self) -> "ValidatedDataset":
        """Recode subjects whose terminal event preceded treatment as censored."""
        recode = (self.delta_s == 1) & (self.delta_t == 0)
        delta_s = np.where(recode, 0, self.delta_s)
        return replace(self, delta_s=delta_s)


def validate(records: Iterable[SubjectRecord] | ValidatedDataset) -> ValidatedDataset:
    """Check every observed-data invariant and return the annotated dataset.

    All offending records are collected and reported together.
    """
    if isinstance(records, ValidatedDataset):
        ds = records
    else:
        records = list(records)
        if not records:
            raise DatasetValidationError([("<dataset>", "empty record list")])
        k = len(records[0].c)
        ds = ValidatedDataset(
            ids=np.array([str(r.id) for r in records], dtype=object),
            y_t=np.array([r.y_t for r in records], dtype=float),
            delta_t=np.array([r.delta_t for r in records]),
            y_s=np.array([r.y_s for r in records], dtype=float),
            delta_s=np.array([r.delta_s for r in records]),
            a=np.array([r.a for r in records]),
            x=np.array([r.x for r in records], dtype=float),
            c=np.array([r.c for r in records], dtype=float).reshape(len(records), k),
        )
    if ds.n == 0:
        raise DatasetValidationError([("<dataset>", "empty record list")])

    problems: list[tuple[str, str]] = []

    def flag(mask: np.ndarray, reason: str) -> None:
        for i in np.flatnonzero(mask):
            problems.append((str(ds.ids[i]), reason))

    finite = (
        np.isfinite(ds.y_t) & np.isfinite(ds.y_s)
        & np.isfinite(ds.x) & np.all(np.isfinite(ds.c), axis=1)
    )
    flag(~finite, "non-finite value")
    flag(finite & ((ds.y_t <= 0) | (ds.y_s <= 0)), "nonpositive observation time")
    for name, arr in (("delta_t", ds.delta_t), ("delta_s", ds.delta_s), ("a", ds.a)):
        flag(~np.isin(arr, (0, 1)), f"{name} not in {{0,1}}")
    ok_flags = np.isin(ds.delta_t, (0, 1)) & np.isin(ds.delta_s, (0, 1))
    base = finite & ok_flags
    flag(base & (ds.y_t > ds.y_s), "y_t exceeds y_s")
    flag(base & (ds.delta_t == 0) & (ds.y_t != ds.y_s),
         "y_t differs from y_s although the non-terminal event was not observed")
    flag(base & (ds.delta_t == 1) & (ds.y_t >= ds.y_s),
         "treated-to-terminal interval is empty (y_t must precede y_s when delta_t=1)")

    if problems:
        raise DatasetValidationError(problems)
    arrays = ValidatedDataset(
        ids=np.asarray(ds.ids, dtype=object),
        y_t=np.asarray(ds.y_t, dtype=float),
        delta_t=np.asarray(ds.delta_t, dtype=int),
        y_s=np.asarray(ds.y_s, dtype=float),
        delta_s=np.asarray(ds.delta_s, dtype=int),
        a=np.asarray(ds.a, dtype=int),
        x=np.asarray(ds.x, dtype=float),
        c=np.asarray(ds.c, dtype=float),
    )
    for arr in (arrays.y_t, arrays.delta_t, arrays.y_s, arrays.delta_s,
                arrays.a, arrays.x, arrays.c):
        arr.setflags(write=False)
    return arrays


@dataclass(frozen=True)
class TransitionTable:
    """Array form of the rows of one transition (the Cox engine's input)."""

    transition: str
    entry: np.ndarray
    exit: np.ndarray
    status: np.ndarray
    z: np.ndarray
    columns: tuple[str, ...]
    subject_index: np.ndarray

    @property
    def n_events(self) -> int:
        return int(self.status.sum())


def transition_tables(ds: ValidatedDataset, spec: CovariateSpec) -> dict[str, TransitionTable]:
    """Vectorized expansion of a validated dataset into per-transition tables.

    Every subject contributes a ``01`` and an ``02`` row; subjects with an
    observed treatment time additionally contribute a left-truncated ``12``
    row.  This layout encodes exactly the per-subject likelihood
    factorization of the illness-death model.
    """
    if spec.max_confounder() > ds.n_confounders:
        raise CovariateSpecError(
            f"specification uses c{spec.max_confounder()} but the dataset has "
            f"{ds.n_confounders} confounder column(s)"
        )
    treated = ds.delta_t == 1
    all_idx = np.arange(ds.n)
    tables: dict[str, TransitionTable] = {}

    z01, cols01 = design_matrix(spec.terms_01, ds.a, ds.x, ds.c,
                                categorical=spec.categorical)
    tables["01"] = TransitionTable(
        "01", np.zeros(ds.n), ds.y_t.astype(float), treated.astype(int),
        z01, tuple(cols01), all_idx,
    )

    exit02 = np.where(treated, ds.y_t, ds.y_s).astype(float)
    status02 = ((~treated) & (ds.delta_s == 1)).astype(int)
    z02, cols02 = design_matrix(spec.terms_02, ds.a, ds.x, ds.c,
                                categorical=spec.categorical)
    tables["02"] = TransitionTable("02", np.zeros(ds.n), exit02, status02,
                                   z02, tuple(cols02), all_idx)

    sel = np.flatnonzero(treated)
    z12, cols12 = design_matrix(
        spec.terms_12, ds.a[sel], ds.x[sel], ds.c[sel],
        tprime=ds.y_t[sel], categorical=spec.categorical,
    )
    tables["12"] = TransitionTable(
        "12", ds.y_t[sel].astype(float), ds.y_s[sel].astype(float),
        ds.delta_s[sel].astype(int), z12, tuple(cols12), sel,
    )
    return tables


def expand_transitions(ds: ValidatedDataset, spec: CovariateSpec) -> list[TransitionRow]:
    """Row-object form of :func:`transition_tables`, ordered by transition."""
    rows: list[TransitionRow] = []
    for tr in TRANSITIONS:
        tab = transition_tables(ds, spec)[tr]
        for j in range(tab.entry.shape[0]):
            rows.append(TransitionRow(
                subject_id=str(ds.ids[tab.subject_index[j]]),
                transition=tr,
                entry=float(tab.entry[j]),
                exit=float(tab.exit[j]),
                status=int(tab.status[j]),
                z=tuple(float(v) for v in tab.z[j]),
            ))
    return rows


def records_from_rows(rows: Iterable[TransitionRow]) -> dict[str, tuple[float, int, float, int]]:
    """Reconstruct ``(y_t, delta_t, y_s, delta_s)`` per subject from rows.

    Inverse of :func:`expand_transitions` on the observation columns; used to
    check that the expansion is lossless.
    """
    by_subject: dict[str, dict[str, TransitionRow]] = {}
    for row in rows:
        by_subject.setdefault(row.subject_id, {})[row.transition] = row
    out: dict[str, tuple[float, int, float, int]] = {}
    for sid, tr_rows in by_subject.items():
        r01 = tr_rows["01"]
        if "12" in tr_rows:
            r12 = tr_rows["12"]
            out[sid] = (r01.exit, r01.status, r12.exit, r12.status)
        else:
            r02 = tr_rows["02"]
            out[sid] = (r01.exit, r01.status, r02.exit, r02.status)
    return out


# ---------------------------------------------------------------------------
# CSV interface
# ---------------------------------------------------------------------------

_FIXED_HEADER = ["id", "y_t", "delta_t", "y_s", "delta_s", "a", "x"]


def read_subject_csv(path) -> list[SubjectRecord]:
    """Read the dataset CSV schema ``id,y_t,delta_t,y_s,delta_s,a,x,c_1,...``.

    ``#``-prefixed lines before the header are provenance comments and are
    skipped.  Malformed content raises :class:`CsvFormatError` naming the
    offending physical line numbers; missing values reject the whole record.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        raw = fh.readlines()

    header: list[str] | None = None
    data_lines: list[tuple[int, str]] = []
    for lineno, line in enumerate(raw, start=1):
        if line.startswith("#") or not line.strip():
            continue
        if header is None:
            header = next(csv.reader([line]))
        else:
            data_lines.append((lineno, line))
    if header is None:
        raise CsvFormatError(f"{path}: no header row found")
    if header[: len(_FIXED_HEADER)] != _FIXED_HEADER:
        raise CsvFormatError(
            f"{path}: header must start with {','.join(_FIXED_HEADER)}, got {','.join(header)}"
        )
    c_names = header[len(_FIXED_HEADER):]
    expected = [f"c_{j}" for j in range(1, len(c_names) + 1)]
    if c_names != expected:
        raise CsvFormatError(
            f"{path}: confounder columns must be {','.join(expected) or '(none)'}, "
            f"got {','.join(c_names)}"
        )

    records: list[SubjectRecord] = []
    bad: list[str] = []
    for lineno, line in data_lines:
        fields = next(csv.reader([line]))
        if len(fields) != len(header):
            bad.append(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
            continue
        if any(f.strip() == "" for f in fields):
            bad.append(f"line {lineno}: missing value")
            continue
        try:
            records.append(SubjectRecord(
                id=fields[0],
                y_t=float(fields[1]),
                delta_t=int(fields[2]),
                y_s=float(fields[3]),
                delta_s=int(fields[4]),
                a=int(fields[5]),
                x=float(fields[6]),
                c=tuple(float(v) for v in fields[7:]),
            ))
        except ValueError:
            bad.append(f"line {lineno}: non-numeric value")
    if bad:
        raise CsvFormatError(f"{path}: " + "; ".join(bad[:10])
                             + ("" if len(bad) <= 10 else f" (+{len(bad) - 10} more)"))
    return records


def write_subject_csv(path, ds: ValidatedDataset, comments: Sequence[str] = ()) -> None:
    """Write a dataset in the CSV schema, preceded by ``#`` comment lines."""
    k = ds.n_confounders
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(_FIXED_HEADER + [f"c_{j}" for j in range(1, k + 1)])
        for i in range(ds.n):
            writer.writerow(
                [ds.ids[i], repr(float(ds.y_t[i])), int(ds.delta_t[i]),
                 repr(float(ds.y_s[i])), int(ds.delta_s[i]), int(ds.a[i]),
                 _fmt_level(float(ds.x[i]))]
                + [repr(float(v)) for v in ds.c[i]]
            )
