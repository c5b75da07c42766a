"""Interval iteration under the two-sided map and the covering certificate.

Images of interval unions are computed branch-by-branch from the monotone
endpoint maps; iterating them mechanizes the covering property
(-p, p) ⊂ U^n(J0), with the edge-case constants (the pivot point x0, the
growth rates beta0' and beta0'') reported alongside.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, RegimeError
from .gauss_maps import (MapParams, apply_map, branch_image, branch_interval,
                         branch_range, enumerate_branches)

__all__ = [
    "IntervalUnion",
    "CoveringCertificate",
    "image_of_union",
    "covering_index",
    "pivot_x0",
    "beta_prime",
    "beta_double_prime",
    "BetaPrimeResult",
]

_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class IntervalUnion:
    """Sorted disjoint open intervals inside the closed domain."""

    parts: tuple[tuple[float, float], ...]

    @classmethod
    def from_parts(cls, parts) -> "IntervalUnion":
        cleaned = [(float(lo), float(hi)) for lo, hi in parts if hi - lo > 0]
        cleaned.sort()
        merged: list[list[float]] = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1] + _MERGE_TOL:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple((lo, hi) for lo, hi in merged))

    @property
    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.parts)

    def contains_interval(self, lo: float, hi: float) -> bool:
        for a, b in self.parts:
            if a <= lo and hi <= b:
                return True
        return False

    def intersect(self, lo: float, hi: float) -> "IntervalUnion":
        out = []
        for a, b in self.parts:
            c, d = max(a, lo), min(b, hi)
            if d > c:
                out.append((c, d))
        return IntervalUnion(tuple(out))

    def reflected(self) -> "IntervalUnion":
        return IntervalUnion.from_parts([(-hi, -lo) for lo, hi in self.parts])


@dataclass
class CoveringCertificate:
    """Record of the interval iteration reaching full coverage."""

    params: MapParams
    j0: tuple[float, float]
    n_steps: int
    history: list[tuple[int, float]]
    covered: bool
    epsilon_edge: float
    pivot_used: bool = False
    unresolved_radius: float = 0.0
    beta_double_prime: float | None = None

    def to_json(self) -> str:
        payload = {
            "schema": 1,
            "kind": "two_sided" if self.params.two_sided_kind else "one_sided",
            "p": self.params.p,
            "beta": self.params.beta,
            "J0": list(self.j0),
            "n_steps": self.n_steps,
            "covered": self.covered,
            "epsilon_edge": self.epsilon_edge,
            "pivot_used": self.pivot_used,
            "unresolved_radius": self.unresolved_radius,
            "beta_double_prime": self.beta_double_prime,
            "history": [[n, m] for n, m in self.history],
        }
        return json.dumps(payload, indent=2)


def image_of_union(params: MapParams, J: IntervalUnion, u_max: int = 10000) -> IntervalUnion:
    """Exact image of an interval union, branch by branch.

    Branches are enumerated up to |u| <= u_max; parts of J inside the
    unresolved core around 0 (radius beta/(2 u_max + 1)) are not mapped,
    which only shrinks the image (conservative for covering checks).
    """
    params.require_expanding("interval image")
    if not J.parts:
        return J
    p, beta = float(params.p), params.beta
    two = params.two_sided_kind
    u_start, _ = branch_range(params)
    parts = []
    for lo, hi in J.parts:
        # branch indices whose interval meets (lo, hi): solve from endpoints
        if two:
            cands = set()
            for x in (lo, hi):
                if abs(x) > 1e-300:
                    cands.add(int(math.floor(abs(beta / (2 * x)))) + 1)
            u_hi_abs = min(u_max, max(cands) + 1 if cands else u_max)
            index_iter = [u for a in range(u_start, u_hi_abs + 1) for u in (a, -a)]
        else:
            vmax = u_max
            if lo > 1e-300:
                vmax = min(u_max, int(math.floor(beta / lo)) + 1)
            index_iter = list(range(u_start, vmax + 1))
        for u in index_iter:
            try:
                blo, bhi = branch_interval(params, u)
            except DomainError:
                continue
            c, d = max(lo, blo), min(hi, bhi)
            if d <= c:
                continue
            if two:
                ylo = p * (2 * u - beta / c)
                yhi = p * (2 * u - beta / d)
            else:
                ylo, yhi = p * (beta / d - u), p * (beta / c - u)
            parts.append((min(ylo, yhi), max(ylo, yhi)))
    return IntervalUnion.from_parts(parts)


def covering_index(params: MapParams, j0: tuple[float, float],
                   epsilon_edge: float | None = None, n_max: int = 50,
                   u_max: int = 10000) -> CoveringCertificate:
    """Iterate J0 until the image covers (-p + eps, p - eps).

    Conservative in two ways: branch truncation only shrinks images, and
    coverage is demanded for the closed eps-shrunk interval (branch images
    are open, so exact open coverage is ill-posed in floating point).
    Returns a certificate with the measure history; ``covered`` is False
    with the history preserved if n_max steps do not suffice.
    """
    params.require_expanding("covering iteration", strict=True)
    p, beta = float(params.p), params.beta
    two = params.two_sided_kind
    if epsilon_edge is None:
        epsilon_edge = 1e-9 * p
    lo, hi = float(j0[0]), float(j0[1])
    dom_lo, dom_hi = (-p, p) if two else (0.0, p)
    if not (dom_lo <= lo < hi <= dom_hi):
        raise ParameterError(f"J0 must be a nonempty open subinterval of the domain, got {j0}")
    goal = (dom_lo + epsilon_edge, dom_hi - epsilon_edge)
    unresolved = beta / (2 * u_max + 1) if two else beta / (u_max + 1)

    bdp = None
    pivot_used = False
    if two:
        try:
            x0 = pivot_x0(params)
            bdp = beta_double_prime(params)
        except RegimeError:
            x0 = None
    else:
        x0 = None

    J = IntervalUnion.from_parts([(lo, hi)])
    history = [(0, J.measure)]
    for n in range(1, n_max + 1):
        if x0 is not None:
            u0 = branch_range(params)[0]
            blo, bhi = branch_interval(params, u0)
            inner = J.intersect(blo, bhi)
            if inner.contains_interval(beta / (2 * u0 + 1), x0):
                pivot_used = True
            inner_neg = J.intersect(*branch_interval(params, -u0))
            if inner_neg.contains_interval(-x0, -beta / (2 * u0 + 1)):
                pivot_used = True
        J = image_of_union(params, J, u_max=u_max)
        history.append((n, J.measure))
        if J.contains_interval(*goal):
            return CoveringCertificate(params, (lo, hi), n, history, True,
                                       epsilon_edge, pivot_used, unresolved, bdp)
    return CoveringCertificate(params, (lo, hi), n_max, history, False,
                               epsilon_edge, pivot_used, unresolved, bdp)


def pivot_x0(params: MapParams) -> float:
    """Pivot point in the upper edge branch: x0 = (2u0+1) beta / (2u0(2u0+1) + beta0).

    The interval (beta/(2u0+1), x0) maps exactly onto the lower edge branch
    and its mirror onto the upper one; the slope there exceeds 2.
    """
    params.require_expanding("pivot point", strict=True)
    if not params.two_sided_kind:
        raise RegimeError("pivot point is a two-sided construction")
    u_start, odd = branch_range(params)
    if odd:
        raise RegimeError("pivot point undefined in the odd-integer case (no edge branches)")
    u0 = u_start
    beta, b0 = params.beta, params.beta0
    x0 = (2 * u0 + 1) * beta / (2 * u0 * (2 * u0 + 1) + b0)
    lo, hi = branch_interval(params, u0)
    if not (lo < x0 < hi):
        raise ParameterError(f"pivot {x0:.6g} fell outside the edge branch ({lo:.6g}, {hi:.6g})")
    return x0


def beta_double_prime(params: MapParams) -> float:
    """Growth constant min(beta0, p*beta/(2 x0^2)) > 1 used off the pivot zone."""
    x0 = pivot_x0(params)
    p, beta = float(params.p), params.beta
    return min(params.beta0, p * beta / (2.0 * x0**2))


@dataclass(frozen=True)
class BetaPrimeResult:
    case: str                  # "(i)" or "(ii)"
    beta0_prime: float | None
    worst_y: float | None
    slack_at_right_endpoint: float | None

    def applicable(self) -> bool:
        return self.case == "(ii)"


def _beta_prime_margin(params: MapParams, b0p: float) -> tuple[float, float]:
    """Minimum of b0p*y' + beta0/y' - (2u0+1) - b0p over the edge-image interval."""
    b0 = params.beta0
    u0 = branch_range(params)[0]
    y_lo = b0 / (2 * u0 + 3)
    y_hi = b0 - 2 * u0
    g = lambda y: b0p * y + b0 / y - (2 * u0 + 1) - b0p
    cands = [y_hi]
    y_crit = math.sqrt(b0 / b0p)
    if y_lo < y_crit < y_hi:
        cands.append(y_crit)
    cands.append(y_lo + 1e-15 * max(1.0, abs(y_lo)))
    vals = [(g(y), y) for y in cands]
    m, y_at = min(vals)
    return m, y_at


def beta_prime(params: MapParams, tolerance: float = 1e-10) -> BetaPrimeResult:
    """Largest beta0' in (1, beta0] certifying edge-interval growth.

    Case (i): the once-iterated edge interval already contains the next full
    branch (beta0 - 2u0 <= beta0/(2u0+3)); no constant is needed.  Case
    (ii): bisect for the largest beta0' keeping
    beta0'*y' + beta0/y' >= 2u0 + 1 + beta0' on the whole interval
    (beta0/(2u0+3), beta0-2u0]; the minimizer sits at the right endpoint.
    """
    params.require_expanding("edge growth constant", strict=True)
    if not params.two_sided_kind:
        raise RegimeError("edge growth constant is a two-sided construction")
    u0, odd = branch_range(params)
    if odd:
        raise RegimeError("no edge branches in the odd-integer case")
    b0 = params.beta0
    if b0 - 2 * u0 <= b0 / (2 * u0 + 3) + 1e-15:
        return BetaPrimeResult("(i)", None, None, None)
    lo, hi = 1.0, b0
    m_hi, _ = _beta_prime_margin(params, hi)
    if m_hi >= 0:
        lo = hi
    else:
        while hi - lo > tolerance:
            mid = 0.5 * (lo + hi)
            m, _ = _beta_prime_margin(params, mid)
            if m >= 0:
                lo = mid
            else:
                hi = mid
    b0p = lo
    if b0p <= 1.0:
        raise ParameterError("bisection failed to find beta0' > 1 (unexpected in case (ii))")
    _, y_at = _beta_prime_margin(params, b0p)
    y_right = b0 - 2 * u0
    g_right = b0p * y_right + b0 / y_right - (2 * u0 + 1) - b0p
    return BetaPrimeResult("(ii)", b0p, y_at, g_right)
