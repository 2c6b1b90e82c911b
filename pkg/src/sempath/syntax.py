"""Parser for a lavaan-style model description language.

Supported statements, one per line (``;`` also separates statements)::

    f1 =~ NA*A1 + A2 + lab*A3     # measurement
    i ~ c1 + c2                   # regression
    f1 ~~ 1*f1                    # variance / covariance

A coefficient prefix is a number (fixed value), ``NA`` (force free) or an
identifier (label). Everything after ``#`` is a comment.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Union


@dataclass(frozen=True)
class Free:
    pass


@dataclass(frozen=True)
class Fixed:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"fixed value must be finite, got {self.value}")


@dataclass(frozen=True)
class Labelled:
    label: str


CoefficientStatus = Union[Free, Fixed, Labelled]

OPERATORS = ("=~", "~~", "~")

_NAME = r"[A-Za-z_.][A-Za-z0-9_.]*"
_NAME_RE = re.compile(rf"^{_NAME}$")
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_STATEMENT_RE = re.compile(rf"^\s*({_NAME})\s*(=~|~~|~)(.*)$")
_BAD_OPERATORS = (":=", "<~", "==", "|", "<", ">")


class ModelSyntaxError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(message + where)


@dataclass(frozen=True)
class ModelSpec:
    """Parsed model.

    ``latent_defs`` holds ``(latent, ((indicator, status), ...))``,
    ``regressions`` holds ``(outcome, predictor, status)`` and
    ``covariances`` holds ``(var1, var2, status)``. ``growth`` switches on
    the mean structure; ``fixed_x`` fixes (co)variances and means of
    exogenous observed variables at their sample values.
    """

    latent_defs: tuple = ()
    regressions: tuple = ()
    covariances: tuple = ()
    observed_vars: tuple = ()
    latent_vars: tuple = ()
    growth: bool = False
    fixed_x: bool = True
    duplicates: tuple = field(default=(), compare=False)

    def canonical(self) -> "ModelSpec":
        """Order-free form used to compare specs parsed from permuted text."""
        return replace(
            self,
            latent_defs=tuple(sorted((lv, tuple(sorted(ind, key=_status_key)))
                                     for lv, ind in self.latent_defs)),
            regressions=tuple(sorted(self.regressions, key=_status_key)),
            covariances=tuple(sorted(self.covariances, key=_status_key)),
            observed_vars=tuple(sorted(self.observed_vars)),
            latent_vars=tuple(sorted(self.latent_vars)),
        )

    @property
    def labels(self) -> list[str]:
        out = []
        for _, ind in self.latent_defs:
            out += [s.label for _, s in ind if isinstance(s, Labelled)]
        for entry in self.regressions + self.covariances:
            if isinstance(entry[2], Labelled):
                out.append(entry[2].label)
        return out

    def exogenous_observed(self) -> list[str]:
        """Observed variables that only ever act as predictors."""
        targets = {o for o, _, _ in self.regressions}
        for _, ind in self.latent_defs:
            targets.update(name for name, _ in ind)
        preds = []
        for _, p, _ in self.regressions:
            if p in self.observed_vars and p not in targets and p not in preds:
                preds.append(p)
        return preds


def _status_key(item):
    return tuple(repr(x) for x in item)


def _parse_term(term: str, line: int, col: int):
    """Split ``mod*name`` into (modifier, name); modifier may be None."""
    body = term.strip()
    if not body:
        raise ModelSyntaxError("empty term", line, col)
    if "*" in body:
        mod, _, name = body.partition("*")
        mod, name = mod.strip(), name.strip()
        if "*" in name:
            raise ModelSyntaxError(f"too many '*' in term {body!r}", line, col)
    else:
        mod, name = None, body
    if not _NAME_RE.match(name):
        raise ModelSyntaxError(f"invalid variable name {name!r}", line, col)
    if mod is None:
        return None, name
    if mod == "NA":
        return "NA", name
    if _NUMBER_RE.match(mod):
        if not math.isfinite(float(mod)):
            raise ModelSyntaxError(f"fixed value {mod!r} is not finite", line, col)
        return Fixed(float(mod)), name
    if _NAME_RE.match(mod):
        return Labelled(mod), name
    raise ModelSyntaxError(f"invalid coefficient modifier {mod!r}", line, col)


def _statements(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        offset = 0
        for chunk in line.split(";"):
            if chunk.strip():
                yield lineno, offset + 1 + (len(chunk) - len(chunk.lstrip())), chunk
            offset += len(chunk) + 1


def parse_model(text: str, growth: bool = False, fixed_x: bool = True) -> ModelSpec:
    """Parse model text into a :class:`ModelSpec`.

    Raises :class:`ModelSyntaxError` (carrying line and column) on malformed
    input, unknown operators and conflicting duplicate statements.
    """
    loadings: dict[str, list] = {}
    regressions: list = []
    covariances: list = []
    seen: dict = {}
    duplicates: list = []
    order: list[str] = []
    n_statements = 0

    def note(name):
        if name not in order:
            order.append(name)

    def add(key, status, lineno, col):
        if key in seen:
            if seen[key] != status:
                raise ModelSyntaxError(
                    f"conflicting specifications for {' '.join(key)}: "
                    f"{seen[key]} vs {status}", lineno, col)
            duplicates.append((*key, lineno))
            return False
        seen[key] = status
        return True

    for lineno, col, chunk in _statements(text):
        n_statements += 1
        m = _STATEMENT_RE.match(chunk)
        if m is None:
            for bad in _BAD_OPERATORS:
                pos = chunk.find(bad)
                if pos >= 0:
                    raise ModelSyntaxError(f"unknown operator {bad!r}", lineno, col + pos - (len(chunk) - len(chunk.lstrip())))
            raise ModelSyntaxError(f"cannot parse statement {chunk.strip()!r}", lineno, col)
        lhs, op, rhs = m.group(1), m.group(2), m.group(3)
        rhs_col = col + m.start(3) - (len(chunk) - len(chunk.lstrip()))
        if rhs.lstrip().startswith(("~", "=")):
            raise ModelSyntaxError(f"unknown operator near {rhs.strip()[:3]!r}", lineno, rhs_col)
        if not rhs.strip():
            raise ModelSyntaxError("missing right-hand side", lineno, rhs_col)
        note(lhs)
        pos = rhs_col
        for term in rhs.split("+"):
            mod, name = _parse_term(term, lineno, pos)
            pos += len(term) + 1
            note(name)
            if op == "=~":
                first = lhs not in loadings or not loadings[lhs]
                if mod is None:
                    status = Fixed(1.0) if first else Free()
                elif mod == "NA":
                    status = Free()
                else:
                    status = mod
                if add((lhs, op, name), status, lineno, pos):
                    loadings.setdefault(lhs, []).append((name, status))
            else:
                status = Free() if mod in (None, "NA") else mod
                if op == "~":
                    if add((lhs, op, name), status, lineno, pos):
                        regressions.append((lhs, name, status))
                else:
                    key = (min(lhs, name), op, max(lhs, name))
                    if add(key, status, lineno, pos):
                        covariances.append((lhs, name, status))

    if n_statements == 0:
        raise ModelSyntaxError("no statements")

    latent = [v for v in order if v in loadings]
    observed = [v for v in order if v not in loadings]
    labels = [s.label for s in seen.values() if isinstance(s, Labelled)]
    dup_labels = sorted({lab for lab in labels if labels.count(lab) > 1})
    if dup_labels:
        raise ModelSyntaxError(
            f"label(s) {dup_labels} used more than once; equality constraints are not supported")
    return ModelSpec(
        latent_defs=tuple((lv, tuple(loadings[lv])) for lv in latent),
        regressions=tuple(regressions),
        covariances=tuple(covariances),
        observed_vars=tuple(observed),
        latent_vars=tuple(latent),
        growth=growth,
        fixed_x=fixed_x,
        duplicates=tuple(duplicates),
    )


def _fmt(status: CoefficientStatus) -> str:
    if isinstance(status, Fixed):
        return f"{status.value!r}*"
    if isinstance(status, Labelled):
        return f"{status.label}*"
    return "NA*"


def format_model(spec: ModelSpec) -> str:
    """Print a spec with every coefficient status explicit.

    ``parse_model(format_model(spec))`` reproduces ``spec``.
    """
    lines = []
    for lv, ind in spec.latent_defs:
        lines.append(f"{lv} =~ " + " + ".join(_fmt(s) + name for name, s in ind))
    for out, pred, s in spec.regressions:
        lines.append(f"{out} ~ {_fmt(s)}{pred}")
    for a, b, s in spec.covariances:
        lines.append(f"{a} ~~ {_fmt(s)}{b}")
    return "\n".join(lines) + "\n"


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.errors and not self.warnings

    def __str__(self):
        rows = [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]
        return "\n".join(rows) if rows else "ok"


def unscaled_latents(spec: ModelSpec) -> list[str]:
    fixed_var = {a for a, b, s in spec.covariances if a == b and isinstance(s, Fixed)}
    out = []
    for lv, ind in spec.latent_defs:
        has_fixed = any(isinstance(s, Fixed) and s.value != 0 for _, s in ind)
        if not has_fixed and lv not in fixed_var:
            out.append(lv)
    return out


def validate_spec(spec: ModelSpec, data_vars: Iterable[str] | None = None) -> ValidationReport:
    """Collect identification and bookkeeping problems without raising."""
    report = ValidationReport()
    if data_vars is not None:
        available = set(data_vars)
        for v in spec.observed_vars:
            if v not in available:
                report.errors.append(f"unknown variable {v!r}")
    for lv in unscaled_latents(spec):
        report.warnings.append(
            f"latent {lv!r} unscaled: fix a loading or its variance")
    for lhs, op, rhs, line in spec.duplicates:
        report.warnings.append(f"duplicate statement '{lhs} {op} {rhs}' on line {line}")
    return report
