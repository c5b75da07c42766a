"""Piecewise-constant grid functions on tagged interval domains.

A :class:`GridFunction` is a list of disjoint segments, each carrying a
uniform cell partition and one value per cell (cell averages).  Domains are
tagged so restriction/extension between the core, the annulus, the full
beta-interval, and the exterior are exact segment operations with no
resampling.

Exterior functions additionally carry a :class:`TailModel`: beyond the
materialized window the function equals a finite sum of terms
``c_j / (s0 + a_j * y)**2`` exactly (these are the far-field weights of the
inverted pushforward), plus a reported bound for the neglected remainder.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .gauss_maps import Kind, MapParams

__all__ = ["DomainKind", "Segment", "TailModel", "GridFunction", "Grids"]


class DomainKind(enum.Enum):
    CORE = "core"                  # [-p, p]  /  [0, q]
    ANNULUS = "annulus"            # [-beta, beta] \ [-p, p]  /  (q, gamma]
    BETA_INTERVAL = "beta_interval"  # [-beta, beta]  /  [0, gamma]
    EXTERIOR = "exterior"          # R \ [-beta, beta]  /  (gamma, inf)
    OUTSIDE_CORE = "outside_core"  # R \ [-p, p]  /  (q, inf)


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (self.hi > self.lo and self.n >= 1):
            raise ParameterError(f"bad segment [{self.lo}, {self.hi}] with n={self.n}")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.n

    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)

    def mids(self) -> np.ndarray:
        e = self.edges()
        return 0.5 * (e[:-1] + e[1:])


@dataclass(frozen=True)
class TailModel:
    """Exact far-field form ``sum_j c[j] / (s0 + a[j]*y)**2`` beyond the window.

    ``c`` applies for ``y > window``; ``c_neg`` (two-sided only) for
    ``y < -window``.  ``remainder_bound`` bounds the L1 mass of whatever the
    term list does not capture.
    """

    s0: float
    a: np.ndarray
    c: np.ndarray
    window: float
    c_neg: np.ndarray | None = None
    remainder_bound: float = 0.0
    two_sided: bool = True

    def _side_terms(self, positive: bool) -> tuple[np.ndarray, np.ndarray]:
        if positive:
            return self.a, self.c
        if self.c_neg is None:
            raise ParameterError("tail model has no negative side")
        return self.a, self.c_neg

    def mass(self, signed: bool = False) -> float:
        """Integral of the model beyond the window (absolute by default)."""
        total = 0.0
        W = self.window
        sides = [True, False] if self.two_sided else [True]
        for pos in sides:
            a, c = self._side_terms(pos)
            y = W if pos else -W
            # int_W^inf c/(s0+ay)^2 dy = c/(a(s0+aW));
            # int_-inf^-W c/(s0+ay)^2 dy = -c/(a(s0-aW))
            term = c / (a * (self.s0 + a * y))
            if not pos:
                term = -term
            total += float(np.sum(term if signed else np.abs(term)))
        return total

    def eval(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.zeros_like(y)
        pos = y > 0
        a, c = self._side_terms(True)
        out[pos] = np.sum(c[:, None] / (self.s0 + a[:, None] * y[None, pos]) ** 2, axis=0)
        if self.two_sided and np.any(~pos):
            a, c = self._side_terms(False)
            out[~pos] = np.sum(c[:, None] / (self.s0 + a[:, None] * y[None, ~pos]) ** 2, axis=0)
        return out


@dataclass
class GridFunction:
    """Piecewise-constant function: parallel segment and value arrays."""

    domain: DomainKind
    segments: tuple[Segment, ...]
    values: list[np.ndarray]
    tail: TailModel | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.segments) != len(self.values):
            raise ParameterError("segments and values out of step")
        vals = []
        for seg, v in zip(self.segments, self.values):
            v = np.asarray(v, dtype=float)
            if v.shape != (seg.n,):
                raise ParameterError(f"segment needs {seg.n} values, got {v.shape}")
            vals.append(v)
        self.values = vals

    # ---- norms and integrals -------------------------------------------------

    def mass(self) -> float:
        """Integral over the materialized segments (tail mass excluded)."""
        return float(sum(seg.width * v.sum() for seg, v in zip(self.segments, self.values)))

    def l1_norm(self) -> float:
        return float(sum(seg.width * np.abs(v).sum() for seg, v in zip(self.segments, self.values)))

    def sup_norm(self) -> float:
        return float(max((np.abs(v).max() if len(v) else 0.0) for v in self.values))

    def bv_norm(self) -> float:
        """L1 norm plus the grid total variation sum |v_{i+1} - v_i| per segment."""
        tv = sum(float(np.abs(np.diff(v)).sum()) for v in self.values)
        return self.l1_norm() + tv

    def total_variation(self) -> float:
        return float(sum(np.abs(np.diff(v)).sum() for v in self.values))

    # ---- structure -----------------------------------------------------------

    def same_grid(self, other: "GridFunction") -> bool:
        return self.domain == other.domain and self.segments == other.segments

    def copy(self) -> "GridFunction":
        return GridFunction(self.domain, self.segments, [v.copy() for v in self.values],
                            tail=self.tail, meta=dict(self.meta))

    def map_values(self, fn) -> "GridFunction":
        return GridFunction(self.domain, self.segments, [fn(v) for v in self.values],
                            tail=self.tail, meta=dict(self.meta))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if not self.same_grid(other):
            raise ParameterError("grid mismatch in addition")
        if (self.tail is None) != (other.tail is None):
            raise ParameterError("tail mismatch in addition")
        tail = None
        if self.tail is not None:
            t1, t2 = self.tail, other.tail
            if (t1.window != t2.window) or (len(t1.a) != len(t2.a)) or np.any(t1.a != t2.a):
                raise ParameterError("tail models not aligned")
            c_neg = None
            if t1.c_neg is not None:
                c_neg = t1.c_neg + t2.c_neg
            tail = replace(t1, c=t1.c + t2.c, c_neg=c_neg,
                           remainder_bound=t1.remainder_bound + t2.remainder_bound)
        return GridFunction(self.domain, self.segments,
                            [a + b for a, b in zip(self.values, other.values)], tail=tail)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self + other.scaled(-1.0)

    def scaled(self, alpha: float) -> "GridFunction":
        tail = None
        if self.tail is not None:
            c_neg = None if self.tail.c_neg is None else alpha * self.tail.c_neg
            tail = replace(self.tail, c=alpha * self.tail.c, c_neg=c_neg,
                           remainder_bound=abs(alpha) * self.tail.remainder_bound)
        return GridFunction(self.domain, self.segments,
                            [alpha * v for v in self.values], tail=tail, meta=dict(self.meta))

    def flat(self) -> np.ndarray:
        return np.concatenate(self.values) if self.values else np.empty(0)

    def with_flat(self, vec: np.ndarray) -> "GridFunction":
        out, pos = [], 0
        for seg in self.segments:
            out.append(np.asarray(vec[pos:pos + seg.n], dtype=float))
            pos += seg.n
        if pos != len(vec):
            raise ParameterError("flat vector length mismatch")
        return GridFunction(self.domain, self.segments, out, tail=self.tail)

    def eval(self, x) -> np.ndarray:
        """Pointwise evaluation (cells are half-open [lo, hi); 0 off-support)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for seg, v in zip(self.segments, self.values):
            inside = (x >= seg.lo) & (x < seg.hi)
            idx = np.floor((x[inside] - seg.lo) / seg.width).astype(int)
            idx = np.clip(idx, 0, seg.n - 1)
            out[inside] += v[idx]
        if self.tail is not None:
            far = np.abs(x) > self.tail.window if self.tail.two_sided else x > self.tail.window
            if np.any(far):
                out[far] += self.tail.eval(x[far])
        return out

    def sample_table(self) -> np.ndarray:
        """(x_mid, value) rows over all segments, for CSV export."""
        xs = np.concatenate([seg.mids() for seg in self.segments])
        vs = self.flat()
        order = np.argsort(xs)
        return np.column_stack([xs[order], vs[order]])


# ---------------------------------------------------------------------------


def _cell_average_of_linear_pieces(seg: Segment, knots: np.ndarray, knot_vals: np.ndarray) -> np.ndarray:
    """Exact cell averages over ``seg`` of the piecewise-linear interpolant."""
    # integrate the piecewise-linear function exactly via its antiderivative
    e = seg.edges()
    pts = np.union1d(e, knots[(knots > seg.lo) & (knots < seg.hi)])
    vals = np.interp(pts, knots, knot_vals, left=0.0, right=0.0)
    piece_int = 0.5 * (vals[:-1] + vals[1:]) * np.diff(pts)
    cum = np.concatenate([[0.0], np.cumsum(piece_int)])
    at_edges = np.interp(e, pts, cum)
    return np.diff(at_edges) / seg.width


@dataclass(frozen=True)
class Grids:
    """Shared grid geometry for one parameter set.

    The core is one uniform segment; the annulus reuses the core cell width
    (rounded to fit); the exterior is a chain of dyadic blocks out to a
    window large enough that the tail model of every pushforward output is
    exact (each far branch samples a single source cell there).
    """

    params: MapParams
    core: Segment
    annulus: tuple[Segment, ...]
    exterior: tuple[Segment, ...]

    @classmethod
    def build(cls, params: MapParams, n_cells: int, n_annulus: int | None = None,
              ext_cells_per_block: int | None = None, n_blocks: int | None = None) -> "Grids":
        params.require_expanding("grid construction")
        p, beta = float(params.p), params.beta
        if n_cells < 16:
            raise ParameterError("n_cells must be >= 16")
        if params.two_sided_kind:
            core = Segment(-p, p, int(n_cells))
        else:
            core = Segment(0.0, p, int(n_cells))
        w = core.width
        if beta <= p * (1.0 + 1e-12):
            # boundary case beta = p: the annulus degenerates to nothing
            annulus: tuple[Segment, ...] = ()
            w_min = w
        else:
            if n_annulus is None:
                n_annulus = max(4, int(round((beta - p) / w)))
            if params.two_sided_kind:
                annulus = (Segment(-beta, -p, n_annulus), Segment(p, beta, n_annulus))
            else:
                annulus = (Segment(p, beta, n_annulus),)
            w_min = min(w, (beta - p) / n_annulus)
        if n_blocks is None:
            # window beyond which every inverted-pushforward branch is confined
            # to one source cell: W >= beta^2 / (smallest source cell)
            target = beta**2 / w_min
            n_blocks = max(4, int(math.ceil(math.log2(target / beta))) + 1)
        if ext_cells_per_block is None:
            ext_cells_per_block = max(64, int(n_cells) // 4)
        blocks = []
        lo = beta
        for _ in range(n_blocks):
            hi = 2 * lo
            blocks.append(Segment(lo, hi, ext_cells_per_block))
            lo = hi
        if params.two_sided_kind:
            mirrored = [Segment(-b.hi, -b.lo, b.n) for b in reversed(blocks)]
            exterior = tuple(mirrored + blocks)
        else:
            exterior = tuple(blocks)
        return cls(params, core, annulus, exterior)

    @property
    def window(self) -> float:
        return max(seg.hi for seg in self.exterior)

    def segments_of(self, domain: DomainKind) -> tuple[Segment, ...]:
        if domain == DomainKind.CORE:
            return (self.core,)
        if domain == DomainKind.ANNULUS:
            return self.annulus
        if domain == DomainKind.BETA_INTERVAL:
            segs = list(self.annulus) + [self.core]
            return tuple(sorted(segs, key=lambda s: s.lo))
        if domain == DomainKind.EXTERIOR:
            return self.exterior
        if domain == DomainKind.OUTSIDE_CORE:
            segs = list(self.annulus) + list(self.exterior)
            return tuple(sorted(segs, key=lambda s: s.lo))
        raise ParameterError(f"unknown domain {domain}")

    def zero(self, domain: DomainKind) -> GridFunction:
        segs = self.segments_of(domain)
        return GridFunction(domain, segs, [np.zeros(s.n) for s in segs])

    def constant(self, domain: DomainKind, value: float) -> GridFunction:
        segs = self.segments_of(domain)
        return GridFunction(domain, segs, [np.full(s.n, float(value)) for s in segs])

    def from_callable(self, domain: DomainKind, fn, samples_per_cell: int = 8) -> GridFunction:
        """Cell averages of ``fn`` by per-cell midpoint-composite sampling."""
        segs = self.segments_of(domain)
        vals = []
        for seg in segs:
            e = seg.edges()
            offs = (np.arange(samples_per_cell) + 0.5) / samples_per_cell
            pts = e[:-1, None] + offs[None, :] * seg.width
            vals.append(np.mean(fn(pts), axis=1))
        return GridFunction(domain, segs, vals)

    def hat_function(self, center: float, half_width: float, height: float = 1.0) -> GridFunction:
        """Exact cell averages of a symmetric tent supported in the annulus."""
        knots = np.array([center - half_width, center, center + half_width])
        kv = np.array([0.0, height, 0.0])
        segs = self.segments_of(DomainKind.ANNULUS)
        lo_ok = any(seg.lo <= knots[0] and knots[2] <= seg.hi for seg in segs)
        if not lo_ok:
            raise ParameterError("hat support must sit inside one annulus segment")
        vals = [_cell_average_of_linear_pieces(seg, knots, kv) for seg in segs]
        return GridFunction(DomainKind.ANNULUS, segs, vals)

    def hat_basis(self, k: int) -> list[GridFunction]:
        """k tents with disjoint supports spread over the annulus segments."""
        if k < 0:
            raise ParameterError("k must be >= 0")
        if k == 0:
            return []
        segs = self.segments_of(DomainKind.ANNULUS)
        per = [k // len(segs)] * len(segs)
        for i in range(k - sum(per)):
            per[i] += 1
        out = []
        for seg, m in zip(segs, per):
            if m == 0:
                continue
            slot = (seg.hi - seg.lo) / m
            for i in range(m):
                c = seg.lo + (i + 0.5) * slot
                out.append(self.hat_function(c, 0.4 * slot))
        return out

    def random_piecewise(self, domain: DomainKind, rng: np.random.Generator,
                         smooth: bool = False) -> GridFunction:
        """Random test function: iid cell values, or a random smooth profile."""
        segs = self.segments_of(domain)
        vals = []
        for seg in segs:
            if smooth:
                mids = seg.mids()
                t = (mids - seg.lo) / (seg.hi - seg.lo)
                v = np.zeros(seg.n)
                for m in range(1, 4):
                    v += rng.normal() * np.cos(math.pi * m * t) + rng.normal() * np.sin(math.pi * m * t)
                v += rng.normal()
                vals.append(v)
            else:
                vals.append(rng.uniform(-1.0, 1.0, seg.n))
        return GridFunction(domain, segs, vals)
