"""Gauss-type interval maps, their branch structure, and hypothesis checks.

Two families are supported, selected by ``MapParams.kind``:

* two-sided: ``U(x) = p * frac2(-beta/x)`` on ``(-p, p]``, with ``U(0) = 0``;
* one-sided: ``V(x) = q * frac1(gamma/x)`` on ``[0, q)``, with ``V(0) = 0``.

Both are piecewise Moebius with countably many monotone branches
accumulating at 0.  On branch ``u`` the two-sided map is
``x -> p*(2u - beta/x)`` (increasing), and on branch ``v`` the one-sided
map is ``x -> q*(gamma/x - v)`` (decreasing).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import DomainError, ParameterError, RegimeError

__all__ = [
    "Kind",
    "MapParams",
    "Branch",
    "BranchSet",
    "HypothesisReport",
    "frac2",
    "frac1",
    "apply_map",
    "branch_slope",
    "enumerate_branches",
    "branch_inverse",
    "branch_interval",
    "branch_image",
    "branch_range",
    "check_hypotheses",
]


class Kind(enum.Enum):
    TWO_SIDED = "two_sided"
    ONE_SIDED = "one_sided"


def frac2(t):
    """Reduce mod 2 into ``(-1, 1]``: the unique r with ``t - r`` an even integer.

    Implemented as ``t - 2*round_half_down(t/2)`` with an explicit clamp so
    exact even integers land on the boundary value consistently (``frac2(2k)
    = 0`` and ``frac2(2k+1) = 1`` for integer ``k``).
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("frac2 requires finite input")
    # round-half-down of t/2: ceil(t/2 - 1/2)
    k = np.ceil(t / 2.0 - 0.5)
    r = t - 2.0 * k
    # floating correction onto (-1, 1]
    r = np.where(r <= -1.0, r + 2.0, r)
    r = np.where(r > 1.0, r - 2.0, r)
    return r if r.ndim else float(r)


def frac1(t):
    """Reduce mod 1 into ``[0, 1)``: the unique r with ``t - r`` an integer."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("frac1 requires finite input")
    r = t - np.floor(t)
    r = np.where(r >= 1.0, r - 1.0, r)
    r = np.where(r < 0.0, r + 1.0, r)
    return r if r.ndim else float(r)


@dataclass(frozen=True)
class MapParams:
    """Parameters fixing one dynamical system.

    For the two-sided family the fields are ``(p, beta)``; for the one-sided
    family ``q`` and ``gamma`` alias the same slots, so formulas shared by
    both families are written once in terms of ``p`` and ``beta``.
    """

    kind: Kind
    p: int
    beta: float

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ParameterError(f"p (resp. q) must be a positive integer, got {self.p}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ParameterError(f"beta (resp. gamma) must be positive and finite, got {self.beta}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def two_sided(cls, p: int, beta: float) -> "MapParams":
        return cls(Kind.TWO_SIDED, p, beta)

    @classmethod
    def one_sided(cls, q: int, gamma: float) -> "MapParams":
        return cls(Kind.ONE_SIDED, q, gamma)

    # one-sided aliases
    @property
    def q(self) -> int:
        return self.p

    @property
    def gamma(self) -> float:
        return self.beta

    @property
    def beta0(self) -> float:
        """Expansion ratio beta/p (resp. gamma/q)."""
        return self.beta / self.p

    @property
    def two_sided_kind(self) -> bool:
        return self.kind is Kind.TWO_SIDED

    def require_expanding(self, what: str = "this operation", strict: bool = False):
        """Check the expanding regime.

        ``strict`` demands beta0 > 1 (the nonuniqueness regime proper);
        otherwise the boundary beta0 = 1 is allowed, where every branch is
        still full (this is the classical Gauss map for the one-sided
        family with gamma = q).
        """
        b0 = self.beta0
        bad = b0 <= 1.0 if strict else b0 < 1.0 - 1e-12
        if bad:
            cmp = ">" if strict else ">="
            raise RegimeError(
                f"{what} requires the expanding regime beta/p {cmp} 1 "
                f"(resp. gamma/q {cmp} 1); got ratio {b0:.6g}"
            )

    def domain_interval(self) -> tuple[float, float]:
        """Half-open domain: ``(-p, p]`` two-sided, ``[0, q)`` one-sided."""
        if self.two_sided_kind:
            return (-float(self.p), float(self.p))
        return (0.0, float(self.p))

    def label(self) -> str:
        if self.two_sided_kind:
            return f"two-sided(p={self.p}, beta={self.beta:g})"
        return f"one-sided(q={self.p}, gamma={self.beta:g})"


def apply_map(params: MapParams, x):
    """Evaluate the map pointwise; accepts scalars or arrays.

    Raises DomainError if any point lies outside the half-open domain.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    p, beta = float(params.p), params.beta
    if params.two_sided_kind:
        if np.any((x <= -p) | (x > p) | ~np.isfinite(x)):
            raise DomainError(f"point outside (-{params.p}, {params.p}]")
        out = np.zeros_like(x)
        nz = x != 0.0
        out[nz] = p * np.asarray(frac2(-beta / x[nz]))
    else:
        if np.any((x < 0) | (x >= p) | ~np.isfinite(x)):
            raise DomainError(f"point outside [0, {params.p})")
        out = np.zeros_like(x)
        nz = x != 0.0
        out[nz] = p * np.asarray(frac1(beta / x[nz]))
    return float(out[0]) if scalar else out


def branch_slope(params: MapParams, x):
    """Signed derivative of the map: ``p*beta/x**2`` resp. ``-q*gamma/x**2``."""
    x = np.asarray(x, dtype=float)
    d = params.p * params.beta / x**2
    return d if params.two_sided_kind else -d


def branch_range(params: MapParams) -> tuple[int, bool]:
    """Return ``(u_start, odd_case)``.

    ``u_start`` is the smallest branch index modulus present; ``odd_case``
    is True when every branch is full (beta0 an odd integer two-sided,
    gamma0 an integer one-sided).
    """
    b0 = params.beta0
    if params.two_sided_kind:
        f = frac2(b0)
        odd = abs(f - 1.0) < 1e-12 and abs(b0 - round(b0)) < 1e-12
        if odd:
            return int(round((b0 + 1.0) / 2.0)), True
        u0 = (b0 - f) / 2.0
        return int(round(u0)), False
    f = frac1(b0)
    integer = min(f, 1.0 - f) < 1e-12 and abs(b0 - round(b0)) < 1e-12
    if integer:
        return int(round(b0)), True
    return int(math.floor(b0)), False


def branch_interval(params: MapParams, u: int) -> tuple[float, float]:
    """Open fundamental interval of branch ``u``, clipped to the domain.

    Two-sided: ``(beta/(2u+1), beta/(2u-1)) ∩ (-p, p)`` for nonzero ``u``.
    One-sided: ``(gamma/(u+1), gamma/u) ∩ (0, q)`` for ``u >= 1``.
    Raises DomainError when the branch is empty.
    """
    p, beta = float(params.p), params.beta
    if params.two_sided_kind:
        if u == 0:
            raise DomainError("two-sided branch index must be nonzero")
        lo = beta / (2 * u + 1)
        hi = beta / (2 * u - 1)
        lo, hi = max(lo, -p), min(hi, p)
    else:
        if u < 1:
            raise DomainError("one-sided branch index must be >= 1")
        lo = beta / (u + 1)
        hi = min(beta / u, p)
    if not lo < hi:
        raise DomainError(f"branch {u} is empty for {params.label()}")
    return lo, hi


def branch_image(params: MapParams, u: int) -> tuple[float, float]:
    """Open image interval of branch ``u`` (map of its fundamental interval)."""
    lo, hi = branch_interval(params, u)
    p, beta = float(params.p), params.beta
    if params.two_sided_kind:
        # increasing on each branch
        return p * (2 * u - beta / lo), p * (2 * u - beta / hi)
    # decreasing on each branch
    return p * (beta / hi - u), p * (beta / lo - u)


def branch_inverse(params: MapParams, u: int, y):
    """Inverse of branch ``u``: ``p*beta/(2pu - y)`` resp. ``q*gamma/(qv + y)``.

    ``y`` must lie in the closure of the branch image.
    """
    ylo, yhi = branch_image(params, u)
    y_arr = np.asarray(y, dtype=float)
    tol = 1e-12 * max(1.0, params.p)
    if np.any(y_arr < ylo - tol) or np.any(y_arr > yhi + tol):
        raise DomainError(
            f"value outside image [{ylo:.6g}, {yhi:.6g}] of branch {u}"
        )
    p, beta = float(params.p), params.beta
    if params.two_sided_kind:
        x = p * beta / (2 * p * u - y_arr)
    else:
        x = p * beta / (p * u + y_arr)
    return float(x) if np.ndim(y) == 0 else x


@dataclass(frozen=True)
class Branch:
    index: int
    lo: float
    hi: float
    is_edge: bool

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class BranchSet:
    """Fundamental intervals enumerated up to a cutoff ``|u| <= u_max``.

    Branches beyond the cutoff exist (they accumulate at 0 with lengths
    O(beta/u^2)) and remain reachable through :meth:`interval`; ``entries``
    holds only the explicitly enumerated ones.
    """

    params: MapParams
    entries: tuple[Branch, ...]
    u0: int | None
    odd_case: bool
    u_max: int

    def interval(self, u: int) -> tuple[float, float]:
        return branch_interval(self.params, u)

    def image(self, u: int) -> tuple[float, float]:
        return branch_image(self.params, u)

    @property
    def edges(self) -> tuple[Branch, ...]:
        return tuple(b for b in self.entries if b.is_edge)

    @property
    def delta(self) -> float:
        """Minimal image length over enumerated branches (partial-filling constant)."""
        lengths = []
        for b in self.entries:
            ilo, ihi = branch_image(self.params, b.index)
            lengths.append(ihi - ilo)
        return min(lengths)

    def indices(self) -> Iterator[int]:
        for b in self.entries:
            yield b.index

    @property
    def unresolved_radius(self) -> float:
        """Radius of the neighbourhood of 0 not covered by enumerated branches."""
        beta = self.params.beta
        if self.params.two_sided_kind:
            return beta / (2 * self.u_max + 1)
        return beta / (self.u_max + 1)


def enumerate_branches(params: MapParams, u_max: int = 64) -> BranchSet:
    """Enumerate fundamental intervals with explicit cutoff ``|u| <= u_max``.

    Requires the expanding regime.  In the non-odd (resp. non-integer) case
    the two branches ``+-u0`` (resp. the single branch ``v0``) are flagged
    as edges: their images fill only part of the codomain.
    """
    params.require_expanding("branch enumeration")
    u_start, odd = branch_range(params)
    if u_max < u_start + 1:
        raise ParameterError(f"u_max={u_max} below first branch index {u_start}")
    entries: list[Branch] = []
    u0 = None if odd else u_start
    if params.two_sided_kind:
        index_iter: list[int] = []
        for a in range(u_start, u_max + 1):
            index_iter.extend([-a, a])
        index_iter.sort()
    else:
        index_iter = list(range(u_start, u_max + 1))
    for u in index_iter:
        lo, hi = branch_interval(params, u)
        is_edge = (not odd) and abs(u) == u_start
        entries.append(Branch(u, lo, hi, is_edge))
    return BranchSet(params, tuple(entries), u0, odd, u_max)


@dataclass(frozen=True)
class HypothesisReport:
    """Numbers backing the expansiveness / second-derivative / filling checks."""

    min_derivative: float
    second_derivative_ratio: float
    min_image_length: float
    expanding: bool = field(default=True)

    def as_dict(self) -> dict:
        return {
            "min_derivative": self.min_derivative,
            "second_derivative_ratio": self.second_derivative_ratio,
            "min_image_length": self.min_image_length,
            "expanding": self.expanding,
        }


def check_hypotheses(params: MapParams, u_max: int = 64, samples_per_branch: int = 33) -> HypothesisReport:
    """Verify uniform expansiveness and the second-derivative condition on a grid.

    Reports ``inf |U'|`` (attained at the domain endpoints, equals beta0),
    ``sup |U''|/|U'|^2`` (equals 2*max|x|/(p*beta) <= 2/p), and the minimal
    branch image length delta > 0.
    """
    params.require_expanding("hypothesis check")
    bs = enumerate_branches(params, u_max=u_max)
    p, beta = float(params.p), params.beta
    min_der = math.inf
    max_ratio = 0.0
    min_img = math.inf
    for b in bs.entries:
        xs = np.linspace(b.lo, b.hi, samples_per_branch)[1:-1]
        der = p * beta / xs**2
        second = 2 * p * beta / np.abs(xs) ** 3
        min_der = min(min_der, float(der.min()))
        max_ratio = max(max_ratio, float((second / der**2).max()))
        ilo, ihi = branch_image(params, b.index)
        min_img = min(min_img, ihi - ilo)
    # the infimum over the whole domain is attained at |x| = p
    min_der = min(min_der, params.beta0)
    max_ratio = max(max_ratio, 2.0 * p / (p * beta))
    return HypothesisReport(min_der, max_ratio, min_img, expanding=min_der > 1.0)
