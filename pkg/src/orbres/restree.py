"""Resolution trees of quotient singularities and exact blow-up constants.

The tree recursion: starting from a reduced weight vector (a0, a1, ..., an),
every index i with a_i != 1 carries a residual singular point; blowing it up
replaces the vector by (a_i, a1, ..., x, ..., an) with x = -a0 mod a_i placed
in slot i, reduced again.  A branch is complete when it reaches (m, 1, ..., 1),
whose blow-up is a manifold.  The full recursion terminates for every valid
input because the leading entry strictly decreases along any branch.

Also here: the first-Chern-class coefficient of a weighted blow-up, the
exact topological constant multiplying the epsilon^(2k-2) correction of the
target scalar curvature, and an independent symbolic oracle that re-derives
that constant by brute-force expansion of the defining cohomology ratio.
All constants are exact rationals (a value and a power of pi).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .weights import (
    CongruenceClass,
    Kind,
    NonIsolatedError,
    WeightError,
    WeightVector,
    normalize,
)

VectorLike = Union[WeightVector, CongruenceClass, Sequence[int]]

DEFAULT_MAX_DEPTH = 64


class NodeStatus(Enum):
    SMOOTH_LEAF = "SmoothLeaf"
    INTERIOR = "Interior"
    CYCLE_DETECTED = "CycleDetected"
    DEPTH_EXCEEDED = "DepthExceeded"
    # The child rule can emit a vector whose canonical representative is not
    # pairwise coprime (e.g. (7,5,3) -> (5,3,3)); its blow-up then has
    # non-isolated singularities and this recursion cannot continue.  The
    # verdict is relative to the canonical representative: some other
    # congruent representative might still admit a resolution.
    NON_ISOLATED = "NonIsolated"


@dataclass(frozen=True)
class ResolutionNode:
    weights: CongruenceClass
    status: NodeStatus
    children: tuple["ResolutionNode", ...] = ()


@dataclass(frozen=True)
class ResolutionTree:
    root: ResolutionNode
    is_type_i: bool
    depth: int
    node_count: int


def _as_class(v: VectorLike) -> CongruenceClass:
    if isinstance(v, CongruenceClass):
        return v
    return normalize(v)


def _pairwise_coprime(rep: Sequence[int]) -> bool:
    for i in range(len(rep)):
        for j in range(i + 1, len(rep)):
            if math.gcd(rep[i], rep[j]) != 1:
                return False
    return True


def child(c: VectorLike, i: int) -> CongruenceClass:
    """Blow up the singular point at branch index i (1-based into the tail).

    Returns normalize((a_i, a1, ..., x, ..., an)) with x = -a0 mod a_i taken
    in [1, a_i].  Rejects branches with a_i = 1 (no singular point there).
    """
    c = _as_class(c)
    rep = c.rep
    if not 1 <= i <= len(rep) - 1:
        raise WeightError(f"branch index {i} out of range for {c}")
    ai = rep[i]
    if ai == 1:
        raise WeightError(f"branch index {i} of {c} has weight 1: no singular point")
    x = (-rep[0]) % ai
    if x == 0:
        # impossible when gcd(a0, ai) = 1; guards corrupt input
        raise WeightError(f"gcd(a0, a{i}) != 1 in {c}")
    new = (ai,) + rep[1:i] + (x,) + rep[i + 1 :]
    return normalize(new)


def build_tree(v: VectorLike, max_depth: int = DEFAULT_MAX_DEPTH) -> ResolutionTree:
    """Depth-first expansion of the blow-up recursion.

    Every node is re-verified: a node whose canonical representative is not
    pairwise coprime becomes a NonIsolated leaf; a repeat of an ancestor's
    weights becomes CycleDetected; nodes at max_depth that are not smooth
    become DepthExceeded.  The tree is fully resolvable (``is_type_i``) iff
    every leaf is a SmoothLeaf.
    """
    root_class = _as_class(v)
    count = 0
    max_level = 0

    def expand(c: CongruenceClass, path: frozenset, level: int) -> ResolutionNode:
        nonlocal count, max_level
        count += 1
        max_level = max(max_level, level)
        if c.is_smooth_model():
            return ResolutionNode(c, NodeStatus.SMOOTH_LEAF)
        if c.rep in path:
            return ResolutionNode(c, NodeStatus.CYCLE_DETECTED)
        if not _pairwise_coprime(c.rep):
            return ResolutionNode(c, NodeStatus.NON_ISOLATED)
        if level >= max_depth:
            return ResolutionNode(c, NodeStatus.DEPTH_EXCEEDED)
        next_path = path | {c.rep}
        kids = tuple(
            expand(child(c, i), next_path, level + 1)
            for i, ai in enumerate(c.tail, start=1)
            if ai != 1
        )
        return ResolutionNode(c, NodeStatus.INTERIOR, kids)

    root = expand(root_class, frozenset(), 0)

    def all_smooth(node: ResolutionNode) -> bool:
        if node.children:
            return all(all_smooth(ch) for ch in node.children)
        return node.status is NodeStatus.SMOOTH_LEAF

    return ResolutionTree(
        root=root,
        is_type_i=all_smooth(root),
        depth=max_level,
        node_count=count,
    )


def euclidean_chain(p: int, q: int, n: int) -> list[CongruenceClass]:
    """The single-branch chain of (p, q, 1, ..., 1) with n trailing weights.

    Iterates (p, q) -> (q, -p mod q) until the vector is smooth; this is the
    subtractive form of the Euclidean algorithm, so the chain always
    terminates and must coincide with build_tree's unique branch.
    """
    if n < 2:
        raise WeightError("need n >= 2 trailing weights")
    if not (p > q >= 1):
        raise WeightError(f"need p > q >= 1, got ({p}, {q})")
    if math.gcd(p, q) != 1:
        raise WeightError(f"({p}, {q}) are not coprime")
    chain = []
    while True:
        chain.append(CongruenceClass((p, q) + (1,) * (n - 1)))
        if q == 1:
            return chain
        p, q = q, (-p) % q


# ---------------------------------------------------------------------------
# exact topological constants


@dataclass(frozen=True)
class IntersectionData:
    """User-supplied intersection numbers of (X, Y, E).

    vol is the top self-intersection of the base Kahler class; icap is the
    divisor-power pairing against base classes that multiplies the leading
    correction (the spec sheet of the tool: I = integral over E of
    [omega]^(n-k) [E]^(k-1)).  ``higher`` optionally maps j to the analogous
    integral with [E]^j for j = k..n-1; entries left out stay symbolic in the
    oracle.  Units are the caller's problem and are not enforced.
    """

    n: int
    k: int
    vol: Fraction
    icap: Fraction
    higher: Mapping[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if not 2 < self.k <= self.n:
            raise ValueError(f"need 2 < k <= n, got k={self.k}, n={self.n}")
        if self.vol <= 0:
            raise ValueError("vol must be positive")


@dataclass(frozen=True)
class LambdaResult:
    """An exact rational multiple of a power of pi."""

    value: Fraction
    pi_power: int = 1

    def as_json_dict(self) -> dict:
        return {
            "numerator": self.value.numerator,
            "denominator": self.value.denominator,
            "pi_power": self.pi_power,
        }

    def __float__(self) -> float:
        return float(self.value) * math.pi**self.pi_power


def chern_coefficient(v: WeightVector) -> Fraction:
    """Coefficient of -[E] in the first Chern class of the weighted blow-up.

    c1 of the blow-up equals the pullback of c1 minus ((sum w_i)/w0 - 1)
    times the exceptional class.  For the classical blow-up (-1, 1, ..., 1)
    of codimension k this is the familiar k - 1.
    """
    if v.kind is not Kind.NONCOMPACT:
        raise WeightError("chern_coefficient expects a non-compact vector")
    return Fraction(sum(v.w), v.w0) - 1


def lambda_constant(v: WeightVector, data: IntersectionData) -> LambdaResult:
    """Exact coefficient of epsilon^(2k-2) in the target scalar curvature.

    lambda = (4 pi n / vol) * chern_coefficient * C(n-1, k-1) * (-1)^(k-1) * I
    with k the codimension and I = data.icap.  Linear in I, inversely linear
    in vol; returned as an exact rational times pi.
    """
    if data.k != len(v.w):
        raise ValueError(f"data.k={data.k} does not match len(w)={len(v.w)}")
    kappa = chern_coefficient(v)
    n, k = data.n, data.k
    value = (
        Fraction(4 * n)
        / data.vol
        * kappa
        * math.comb(n - 1, k - 1)
        * (-1) ** (k - 1)
        * data.icap
    )
    return LambdaResult(value=value, pi_power=1)


# ---------------------------------------------------------------------------
# symbolic expansion oracle


class SymCoeff:
    """A rational linear combination of monomials in opaque symbols.

    Keys are sorted tuples of symbol names; the empty tuple is the rational
    part.  Just enough arithmetic for truncated power series in epsilon^2
    whose coefficients mix known rationals with unevaluated intersection
    numbers.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple, Fraction] | None = None):
        self.terms = {m: c for m, c in (terms or {}).items() if c != 0}

    @classmethod
    def rational(cls, x) -> "SymCoeff":
        return cls({(): Fraction(x)})

    @classmethod
    def symbol(cls, name: str) -> "SymCoeff":
        return cls({(name,): Fraction(1)})

    def __add__(self, other: "SymCoeff") -> "SymCoeff":
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, Fraction(0)) + c
        return SymCoeff(out)

    def __neg__(self) -> "SymCoeff":
        return SymCoeff({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "SymCoeff") -> "SymCoeff":
        return self + (-other)

    def __mul__(self, other) -> "SymCoeff":
        if not isinstance(other, SymCoeff):
            other = SymCoeff.rational(other)
        out: dict[tuple, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(sorted(m1 + m2))
                out[m] = out.get(m, Fraction(0)) + c1 * c2
        return SymCoeff(out)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if isinstance(other, SymCoeff):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == SymCoeff.rational(other).terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_rational(self) -> bool:
        return all(m == () for m in self.terms)

    def rational_value(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} contains unevaluated symbols")
        return self.terms.get((), Fraction(0))

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for m in sorted(self.terms):
            c = self.terms[m]
            parts.append(str(c) if m == () else f"{c}*{'*'.join(m)}")
        return " + ".join(parts)


class OracleMismatch(AssertionError):
    """The brute-force expansion disagrees with the closed-form constant."""


def _series_divide(num: list[SymCoeff], den: list[SymCoeff], order: int) -> list[SymCoeff]:
    """Coefficients of num/den as a power series, through degree `order`."""
    d0 = den[0].rational_value()
    if d0 == 0:
        raise ZeroDivisionError("series division by a series with zero constant term")
    inv0 = Fraction(1) / d0
    out: list[SymCoeff] = []
    for j in range(order + 1):
        acc = num[j] if j < len(num) else SymCoeff()
        for m in range(1, j + 1):
            if m < len(den):
                acc = acc - den[m] * out[j - m]
        out.append(acc * inv0)
    return out


def expansion_oracle(v: WeightVector, data: IntersectionData) -> list[SymCoeff]:
    """Brute-force the epsilon^2-expansion of the average scalar curvature.

    Expands 4 pi n * [c1hat cup (h - t e)^(n-1)] / [(h - t e)^n] in t = eps^2,
    where h is the base Kahler class, e the exceptional class and
    c1hat = pullback(c1) - kappa e.  Evaluation rules on the blown-up space:
    a product of basic classes with e^i integrates to zero for 1 <= i < k and
    pushes forward to the divisor for i >= k (only e-degree >= k-1 survives
    fiberwise on E).  The pushforward orientation is fixed so that the pure
    divisor-power integrals equal minus the user-facing I-numbers; this is
    the unique choice consistent with lambda_constant's closed form.

    Returns the coefficients of t^0 .. t^(k-1) in units of pi: t^0 is
    (4n/vol) * <c1_vol> (the mean scalar curvature of the base, symbolic),
    t^1 .. t^(k-2) must vanish, and t^(k-1) must equal lambda/pi exactly;
    OracleMismatch is raised otherwise.  Unsupplied intersection numbers
    stay opaque (symbols J<j> and P<i>), but never reach the asserted
    coefficients.
    """
    n, k = data.n, data.k
    if data.k != len(v.w):
        raise ValueError(f"data.k={data.k} does not match len(w)={len(v.w)}")
    kappa = chern_coefficient(v)

    def j_number(j: int) -> SymCoeff:
        # integral over E of [omega]^(n-1-j) [E]^j
        if j == k - 1:
            return SymCoeff.rational(data.icap)
        if j in data.higher:
            return SymCoeff.rational(data.higher[j])
        return SymCoeff.symbol(f"J{j}")

    def e_power_integral(i: int) -> SymCoeff:
        # integral over the blow-up of (basic)^(n-i) e^i, basic = [omega]
        if i == 0:
            return SymCoeff.rational(data.vol)
        if i < k:
            return SymCoeff()
        return -j_number(i - 1)

    def c1_e_power_integral(i: int) -> SymCoeff:
        # integral over the blow-up of pullback(c1) [omega]^(n-1-i) e^i
        if i == 0:
            return SymCoeff.symbol("c1_vol")
        if i < k:
            return SymCoeff()
        return -SymCoeff.symbol(f"P{i}")

    numer = [
        SymCoeff.rational(math.comb(n - 1, i) * (-1) ** i)
        * (c1_e_power_integral(i) - SymCoeff.rational(kappa) * e_power_integral(i + 1))
        for i in range(n)
    ]
    denom = [
        SymCoeff.rational(math.comb(n, i) * (-1) ** i) * e_power_integral(i)
        for i in range(n + 1)
    ]
    coeffs = [c * Fraction(4 * n) for c in _series_divide(numer, denom, k - 1)]

    expected_const = SymCoeff.symbol("c1_vol") * (Fraction(4 * n) / data.vol)
    if coeffs[0] != expected_const:
        raise OracleMismatch(f"constant term {coeffs[0]!r} != {expected_const!r}")
    for j in range(1, k - 1):
        if coeffs[j] != SymCoeff():
            raise OracleMismatch(f"t^{j} coefficient {coeffs[j]!r} is nonzero")
    lam = lambda_constant(v, data)
    top = coeffs[k - 1]
    if not top.is_rational() or top.rational_value() != lam.value:
        raise OracleMismatch(
            f"t^{k-1} coefficient {top!r} != closed form {lam.value}"
        )
    return coeffs


# ---------------------------------------------------------------------------
# export


def tree_to_dot(tree: ResolutionTree) -> str:
    """Graphviz DOT text, one node per weight vector, preorder ids."""
    lines = ["digraph resolution {"]
    counter = 0

    def visit(node: ResolutionNode) -> int:
        nonlocal counter
        my_id = counter
        counter += 1
        label = str(node.weights)
        if node.status not in (NodeStatus.SMOOTH_LEAF, NodeStatus.INTERIOR):
            label += f"\\n{node.status.value}"
        lines.append(f'  n{my_id} [label="{label}"];')
        for ch in node.children:
            ch_id = visit(ch)
            lines.append(f"  n{my_id} -> n{ch_id};")
        return my_id

    visit(tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"


def node_to_json_dict(node: ResolutionNode) -> dict:
    return {
        "weights": list(node.weights.rep),
        "status": node.status.value,
        "children": [node_to_json_dict(ch) for ch in node.children],
    }


def tree_to_json_dict(tree: ResolutionTree) -> dict:
    return {
        "is_type_i": tree.is_type_i,
        "depth": tree.depth,
        "node_count": tree.node_count,
        "root": node_to_json_dict(tree.root),
    }


def tree_to_json(tree: ResolutionTree) -> str:
    return json.dumps(tree_to_json_dict(tree), indent=2, sort_keys=True) + "\n"
