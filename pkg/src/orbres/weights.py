"""Exact classification of weighted projective space singularities.

A weight vector (w0, w1, ..., wn) with all entries positive describes a
compact weighted projective space; flipping the sign of the leading entry,
(-w0, w1, ..., wn), describes the non-compact variant (the total space of a
line bundle over the compact space one dimension down).  Everything here is
integer arithmetic: smoothness tests, isolated-singularity tests, enumeration
of singular points with their cyclic group data, and reduction to the
canonical congruence representative used by the blow-up recursion.

Text form: "(-5,3,2,1)".  JSON form: [-5,3,2,1].  The sign of the first
entry selects the kind in both forms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Iterable, Sequence


class Kind(Enum):
    COMPACT = "compact"
    NONCOMPACT = "noncompact"


class WeightError(ValueError):
    """Invalid weight vector or an operation outside its precondition."""


class NonIsolatedError(WeightError):
    """A pair of weights shares a common factor, so singularities form strata.

    Carries the offending index pair and their gcd.
    """

    def __init__(self, i: int, j: int, gcd: int):
        self.pair = (i, j)
        self.gcd = gcd
        super().__init__(
            f"weights at indices {i} and {j} have gcd {gcd} != 1; "
            "singular locus is not isolated"
        )


@dataclass(frozen=True)
class WeightVector:
    """A signed weight tuple.  w0 >= 1 and every w[i] >= 1, len(w) >= 2."""

    kind: Kind
    w0: int
    w: tuple[int, ...]

    def __post_init__(self):
        if self.w0 < 1 or any(x < 1 for x in self.w):
            raise WeightError("all weights must be positive integers")
        if len(self.w) < 2:
            raise WeightError("need at least two trailing weights")
        if any(not isinstance(x, int) for x in (self.w0, *self.w)):
            raise WeightError("weights must be integers")

    @property
    def entries(self) -> tuple[int, ...]:
        """All n+1 weights as positive integers, leading entry first."""
        return (self.w0, *self.w)

    @property
    def signed(self) -> tuple[int, ...]:
        sign = -1 if self.kind is Kind.NONCOMPACT else 1
        return (sign * self.w0, *self.w)

    def __str__(self) -> str:
        return "(" + ",".join(str(x) for x in self.signed) + ")"


@dataclass(frozen=True)
class SingularPoint:
    """One isolated singular point (or stratum, compact case).

    For the non-compact case ``coordinate_index`` is the homogeneous
    coordinate supporting the fixed point and ``support`` is None.  For the
    compact case ``support`` is the set of nonzero coordinates of the stratum
    and ``coordinate_index`` is None.  ``action_exponents`` lists the cyclic
    group's rotation exponents mod ``group_order``, one per coordinate
    transverse to the point/stratum, in increasing coordinate order (the
    non-compact case leads with the xi_0 exponent -w0 mod d).
    """

    group_order: int
    action_exponents: tuple[int, ...]
    coordinate_index: int | None = None
    support: tuple[int, ...] | None = None


@dataclass(frozen=True)
class CongruenceClass:
    """Canonical representative with every trailing weight reduced to [1, a0].

    Two vectors (a0, a) and (b0, b) are congruent when a0 = b0 and
    a_i = b_i mod a0; the corresponding quotient orbifolds are isomorphic.
    """

    rep: tuple[int, ...]

    def __post_init__(self):
        a0 = self.rep[0]
        if a0 < 1 or any(not 1 <= x <= a0 for x in self.rep[1:]):
            raise WeightError(f"{self.rep} is not a reduced representative")

    @property
    def a0(self) -> int:
        return self.rep[0]

    @property
    def tail(self) -> tuple[int, ...]:
        return self.rep[1:]

    def is_smooth_model(self) -> bool:
        """True iff of the form (m, 1, ..., 1): the blow-up is a manifold."""
        return all(x == 1 for x in self.tail)

    def __str__(self) -> str:
        return "(" + ",".join(str(x) for x in self.rep) + ")"


# ---------------------------------------------------------------------------
# parsing / emission


def parse_weights(text: str) -> WeightVector:
    """Parse "(-5,3,2,1)" or a JSON array "[-5,3,2,1]" into a WeightVector."""
    stripped = text.strip()
    if not stripped:
        raise WeightError("empty weight string")
    try:
        if stripped.startswith("["):
            values = json.loads(stripped)
            if not isinstance(values, list):
                raise WeightError(f"expected a JSON array, got {type(values).__name__}")
        else:
            inner = stripped
            if inner.startswith("(") != inner.endswith(")"):
                raise WeightError("unbalanced parentheses")
            inner = inner.strip("()")
            values = [int(tok.strip()) for tok in inner.split(",") if tok.strip()]
    except (json.JSONDecodeError, ValueError) as exc:
        raise WeightError(f"cannot parse weight vector from {text!r}: {exc}") from exc
    return from_signed(values)


def from_signed(values: Sequence[int]) -> WeightVector:
    """Build a WeightVector from signed entries; negative first entry = non-compact."""
    if len(values) < 3:
        raise WeightError(f"need at least 3 entries, got {len(values)}")
    values = [int(v) for v in values]
    first, rest = values[0], values[1:]
    if first == 0:
        raise WeightError("leading weight must be nonzero")
    kind = Kind.NONCOMPACT if first < 0 else Kind.COMPACT
    return WeightVector(kind=kind, w0=abs(first), w=tuple(rest))


def emit_weights(v: WeightVector, form: str = "text") -> str:
    """Inverse of parse_weights; form is "text" or "json"."""
    if form == "json":
        return json.dumps(list(v.signed), separators=(",", " "))
    return str(v)


# ---------------------------------------------------------------------------
# predicates


def is_smooth(v: WeightVector) -> bool:
    """Smoothness of the weighted projective space itself.

    Compact: smooth iff every weight is 1 (ordinary projective space).
    Non-compact: smooth iff the trailing weights are all 1; the total space
    is then the line bundle O(-w0) over ordinary projective space, for any w0.
    """
    if v.kind is Kind.COMPACT:
        return v.w0 == 1 and all(x == 1 for x in v.w)
    return all(x == 1 for x in v.w)


def _offending_pair(entries: Sequence[int]) -> tuple[int, int, int] | None:
    for (i, a), (j, b) in combinations(enumerate(entries), 2):
        g = math.gcd(a, b)
        if g != 1:
            return i, j, g
    return None


def has_isolated_singularities(v: WeightVector) -> bool:
    """Pairwise coprimality over all n+1 weights.

    For the non-compact space this is exactly the condition that all
    singular points are isolated; for the compact space it forces every
    singular stratum to be a coordinate point.
    """
    return _offending_pair(v.entries) is None


def has_isolated_origin(v: WeightVector) -> bool:
    """gcd(w0, w_i) = 1 for all i: the quotient C^n / Z_{w0} acting with
    exponents w has an isolated singularity at the origin."""
    return all(math.gcd(v.w0, x) == 1 for x in v.w)


def offending_pair(v: WeightVector) -> tuple[int, int, int] | None:
    """First (i, j, gcd) violating pairwise coprimality, or None."""
    return _offending_pair(v.entries)


# ---------------------------------------------------------------------------
# singular point enumeration


def singular_points(v: WeightVector) -> list[SingularPoint]:
    """Enumerate singular points (non-compact) or singular strata (compact).

    Non-compact: requires pairwise-coprime weights (raises NonIsolatedError
    otherwise).  One point per index i >= 1 with w_i != 1, living at the
    i-th coordinate point, modelled on C^n / Z_{w_i} where the group rotates
    xi_0 by -w0 and the remaining xi_j by w_j (all mod w_i).

    Compact: accepts any vector.  For each nonempty support subset S of the
    homogeneous coordinates, d = gcd{w_i : i in S}; a stratum is emitted iff
    d > 1, with local transverse model C^{n-|S|+1} / Z_d rotating the
    coordinates outside S by their weights mod d.  The enumeration is over
    all 2^(n+1) - 1 subsets, which is fine for the intended n <= ~12.

    Output order is deterministic: ascending coordinate index, respectively
    lexicographic support.
    """
    if v.kind is Kind.NONCOMPACT:
        bad = _offending_pair(v.entries)
        if bad is not None:
            raise NonIsolatedError(*bad)
        points = []
        for i, wi in enumerate(v.w, start=1):
            if wi == 1:
                continue
            exps = [(-v.w0) % wi]
            exps += [wj % wi for j, wj in enumerate(v.w, start=1) if j != i]
            points.append(
                SingularPoint(
                    coordinate_index=i,
                    group_order=wi,
                    action_exponents=tuple(exps),
                )
            )
        return points

    entries = v.entries
    n_plus_1 = len(entries)
    strata = []
    for size in range(1, n_plus_1 + 1):
        for support in combinations(range(n_plus_1), size):
            d = math.gcd(*(entries[i] for i in support))
            if d <= 1:
                continue
            exps = tuple(entries[i] % d for i in range(n_plus_1) if i not in support)
            strata.append(
                SingularPoint(
                    support=support,
                    group_order=d,
                    action_exponents=exps,
                )
            )
    strata.sort(key=lambda p: (len(p.support), p.support))
    return strata


# ---------------------------------------------------------------------------
# congruence normalization


def normalize(v: WeightVector | Iterable[int]) -> CongruenceClass:
    """Reduce each trailing weight to its representative in [1, a0].

    The representative of x is ((x - 1) mod a0) + 1, i.e. the unique value in
    [1, a0] congruent to x.  Vectors with some w_i divisible by w0 are
    rejected: the zero residue has no positive representative below a0 and
    such a vector violates gcd(w0, w_i) = 1 anyway.  Idempotent.
    """
    if isinstance(v, WeightVector):
        entries = v.entries
    else:
        entries = tuple(int(x) for x in v)
        if entries and entries[0] < 0:
            entries = (-entries[0], *entries[1:])
    a0, tail = entries[0], entries[1:]
    if a0 < 1 or len(tail) < 2:
        raise WeightError(f"cannot normalize {entries}")
    reduced = []
    for i, x in enumerate(tail, start=1):
        if a0 > 1 and x % a0 == 0:
            raise WeightError(
                f"weight w{i} = {x} is divisible by w0 = {a0}; "
                "the origin singularity is not isolated"
            )
        reduced.append(((x - 1) % a0) + 1)
    return CongruenceClass(rep=(a0, *reduced))
