"""Transfer (Perron-Frobenius) operators on grid functions.

The operator is the pushforward of densities under the map:

    P[h](x) = sum_u  p*beta/(2pu - x)^2 h(p*beta/(2pu - x))     (two-sided)
    P[h](x) = sum_{v>=1} q*gamma/(qv + x)^2 h(q*gamma/(qv + x)) (one-sided)

On cell averages the exact projection of P is the Ulam matrix built from
monotone branch preimages; branch families beyond the explicit cutoff
accumulate at 0 and are folded in exactly through digamma tail sums, so
rows are stochastic to machine precision for beta0 >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import digamma

from .errors import ConvergenceError, ParameterError, RegimeError
from .gauss_maps import MapParams, branch_image, branch_interval, branch_range
from .grids import DomainKind, GridFunction, Grids, Segment

__all__ = [
    "SpectralData",
    "ulam_matrix",
    "apply_pf",
    "apply_pf_exact_square",
    "invariant_density",
    "apply_z",
    "spectral_gap_estimate",
    "substochastic_check",
    "series_tail_bound",
]


def _scatter_overlaps(x_edges: np.ndarray, targets: np.ndarray, seg: Segment,
                      rows: list, cols: list, vals: list):
    """Split monotone preimage intervals across the cells of ``seg``.

    ``x_edges[i] .. x_edges[i+1]`` is the preimage of target cell
    ``targets[i]``; each piece is cut at the cell boundaries of ``seg`` and
    its lengths are appended to the COO triplets (source cell, target cell).
    """
    lo, w, n = seg.lo, seg.width, seg.n
    cuts = np.union1d(x_edges, seg.edges())
    cuts = cuts[(cuts >= x_edges[0] - 1e-300) & (cuts <= x_edges[-1] + 1e-300)]
    if len(cuts) < 2:
        return
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    lens = np.diff(cuts)
    tgt_idx = np.searchsorted(x_edges, mids) - 1
    tgt_idx = np.clip(tgt_idx, 0, len(targets) - 1)
    src_idx = np.floor((mids - lo) / w).astype(int)
    keep = (src_idx >= 0) & (src_idx < n) & (lens > 0)
    rows.append(src_idx[keep])
    cols.append(targets[tgt_idx[keep]])
    vals.append(lens[keep])


def _inverse_edges(params: MapParams, u: int, y: np.ndarray) -> np.ndarray:
    p, beta = float(params.p), params.beta
    if params.two_sided_kind:
        return p * beta / (2.0 * p * u - y)
    return p * beta / (p * u + y)


def ulam_matrix(params: MapParams, n_cells: int, u_max: int = 500,
                weighted_interval: tuple[float, float] | None = None) -> sp.csr_matrix:
    """Row-stochastic Ulam matrix: M[i, j] = m(cell_i ∩ U^{-1}(cell_j)) / m(cell_i).

    Branch preimages come from the monotone branch inverses, in three exact
    zones: wide branches (interval longer than a cell) by breakpoint
    scatter, mid branches (interval inside at most two cells) accumulated
    densely into the near-zero rows, and everything beyond the adaptive
    cutoff by closed-form digamma tails into the cells adjacent to 0.  Rows
    then sum to 1 to machine precision whenever beta0 >= 1.

    ``weighted_interval`` keeps only sources inside the given interval (the
    indicator-weighted operator used by the sub-stochastic control for
    beta <= p).
    """
    if n_cells < 16:
        raise ParameterError("n_cells must be >= 16")
    p, beta = float(params.p), params.beta
    two = params.two_sided_kind
    seg = Segment(-p, p, n_cells) if two else Segment(0.0, p, n_cells)
    t = seg.edges()
    w = seg.width
    if params.beta0 >= 1.0 - 1e-12:
        u_start, _ = branch_range(params)
    else:
        u_start = 1
    if u_max < u_start + 2:
        raise ParameterError(f"u_max={u_max} too small; need at least {u_start + 2}")
    step = 2.0 if two else 1.0
    # deep cutoff: the remaining branch clusters (-eta, 0) and (0, eta) must
    # sit inside the cells adjacent to 0, whose edges may be closer than w
    # when the grid does not place an edge at 0
    i0_gap = int(np.searchsorted(t, 0.0, side="right")) - 1
    i0_gap = min(max(i0_gap, 0), n_cells - 1)
    gap = t[i0_gap + 1]
    if two and abs(t[i0_gap]) > 1e-14:
        gap = min(gap, -t[i0_gap])
    gap = max(gap, w * 1e-9)
    u_cut = max(u_max, u_start + 2, int(math.ceil((beta / gap - step / 2.0) / step)) + 2)
    # wide/mid split: branches narrower than one cell go the dense-row route
    u_wide = min(u_cut, max(u_start + 2, int(math.ceil(math.sqrt(2.0 * beta / w)))) + 2)

    rows: list = []
    cols: list = []
    vals: list = []
    targets = np.arange(n_cells)

    def edges_for(u: int) -> np.ndarray:
        ylo, yhi = branch_image(params, u)
        y = np.clip(t, ylo, yhi)
        x = _inverse_edges(params, u, y)
        return x

    for a in range(u_start, u_wide + 1):
        for u in ((a, -a) if two else (a,)):
            try:
                branch_interval(params, u)
            except Exception:
                continue
            x = edges_for(u)
            if x[0] > x[-1]:
                x, tg = x[::-1], targets[::-1]
            else:
                tg = targets
            _scatter_overlaps(x, tg, seg, rows, cols, vals)

    # mid zone: intervals shorter than a cell; accumulate into a dense block
    # of rows around 0
    if u_wide < u_cut:
        r_lo = max(0, int(math.floor((-beta / (step * u_wide) - seg.lo) / w)) - 1) if two else 0
        r_hi = min(n_cells - 1, int(math.floor((beta / (step * u_wide) - seg.lo) / w)) + 1)
        n_rows = r_hi - r_lo + 1
        block = np.zeros(n_rows * n_cells)
        mids_u = np.arange(u_wide + 1, u_cut + 1)
        all_mid = np.concatenate([mids_u, -mids_u]) if two else mids_u
        chunk = max(1, int(2e6 // (n_cells + 1)))
        for start in range(0, len(all_mid), chunk):
            ublk = all_mid[start:start + chunk][:, None].astype(float)
            if two:
                x = p * beta / (2.0 * p * ublk - t[None, :])
            else:
                x = p * beta / (p * ublk + t[None, :])
            if not two:
                x = x[:, ::-1]
                tg = targets[::-1]
            else:
                tg = targets
            lo_e = x[:, :-1]
            hi_e = x[:, 1:]
            i1 = np.floor((lo_e - seg.lo) / w).astype(np.int64)
            i2 = np.floor((hi_e - seg.lo) / w).astype(np.int64)
            i1 = np.clip(i1, 0, n_cells - 1)
            i2 = np.clip(i2, 0, n_cells - 1)
            tgt = np.broadcast_to(tg[None, :], lo_e.shape)
            same = i1 == i2
            flat = (i1 - r_lo) * n_cells + tgt
            lens = hi_e - lo_e
            good = same & (i1 >= r_lo) & (i1 <= r_hi)
            block += np.bincount(flat[good].ravel(),
                                 weights=lens[good].ravel(),
                                 minlength=n_rows * n_cells)
            crossing = ~same
            if np.any(crossing):
                cut = seg.lo + i2 * w
                part_hi = hi_e - cut
                part_lo = cut - lo_e
                g1 = crossing & (i1 >= r_lo) & (i1 <= r_hi)
                g2 = crossing & (i2 >= r_lo) & (i2 <= r_hi)
                block += np.bincount(((i1 - r_lo) * n_cells + tgt)[g1].ravel(),
                                     weights=part_lo[g1].ravel(),
                                     minlength=n_rows * n_cells)
                block += np.bincount(((i2 - r_lo) * n_cells + tgt)[g2].ravel(),
                                     weights=part_hi[g2].ravel(),
                                     minlength=n_rows * n_cells)
        block = block.reshape(n_rows, n_cells)
        rr, cc = np.nonzero(block)
        rows.append(rr + r_lo)
        cols.append(cc)
        vals.append(block[rr, cc])

    # deep tails: |u| > u_cut clusters inside the cells adjacent to 0
    i0 = int(np.searchsorted(t, 0.0, side="right")) - 1
    i0 = min(max(i0, 0), n_cells - 1)
    at_edge = abs(t[max(i0, 0)]) < 1e-14
    i_pos = i0
    i_neg = i0 - 1 if (two and at_edge) else i0
    a_edges, b_edges = t[:-1], t[1:]
    if two:
        per = 2.0 * p
        tail_pos = (beta / 2.0) * (digamma(u_cut + 1 - a_edges / per)
                                   - digamma(u_cut + 1 - b_edges / per))
        tail_neg = (beta / 2.0) * (digamma(u_cut + 1 + b_edges / per)
                                   - digamma(u_cut + 1 + a_edges / per))
        rows.extend([np.full(n_cells, i_pos), np.full(n_cells, i_neg)])
        cols.extend([targets, targets])
        vals.extend([tail_pos, tail_neg])
    else:
        tail = beta * (digamma(u_cut + 1 + b_edges / p)
                       - digamma(u_cut + 1 + a_edges / p))
        rows.append(np.full(n_cells, i_pos))
        cols.append(targets)
        vals.append(tail)

    rows_a = np.concatenate(rows)
    cols_a = np.concatenate(cols)
    vals_a = np.concatenate(vals)
    if weighted_interval is not None:
        wlo, whi = weighted_interval
        keep = (t[rows_a] >= wlo - 1e-12) & (t[rows_a + 1] <= whi + 1e-12)
        rows_a, cols_a, vals_a = rows_a[keep], cols_a[keep], vals_a[keep]
    M = sp.coo_matrix((vals_a / w, (rows_a, cols_a)), shape=(n_cells, n_cells))
    return M.tocsr()


def series_tail_bound(params: MapParams, u_max: int, h_sup: float) -> float:
    """Spec tail bound for truncating the PF series at |u| <= u_max."""
    p, beta = float(params.p), params.beta
    js = np.arange(u_max + 1, u_max + 200001, dtype=float)
    if params.two_sided_kind:
        tail = 2.0 * np.sum(p * beta / (2.0 * p * js - p) ** 2)
        tail += 2.0 * p * beta / (2.0 * p) ** 2 / (js[-1])
    else:
        tail = np.sum(p * beta / (p * js) ** 2) + beta / js[-1] / p
    return float(h_sup * tail)


@dataclass
class SpectralData:
    """Invariant density and spectral metadata of the discretized operator."""

    params: MapParams
    rho0: GridFunction
    normalization: float
    z_spectral_radius_estimate: float
    ulam_cells: int
    residual: float
    u_max: int = 500
    iterations: int = 0
    matrix: sp.csr_matrix | None = field(default=None, repr=False)
    phi0_sup_distance: float = float("nan")

    def as_dict(self) -> dict:
        kind = "two_sided" if self.params.two_sided_kind else "one_sided"
        return {
            "schema": 1,
            "kind": kind,
            "p": self.params.p,
            "beta": self.params.beta,
            "ulam_cells": self.ulam_cells,
            "u_max": self.u_max,
            "normalization": self.normalization,
            "residual": self.residual,
            "z_spectral_radius_estimate": self.z_spectral_radius_estimate,
            "iterations": self.iterations,
            "phi0_sup_distance": self.phi0_sup_distance,
        }


def _core_grid(params: MapParams, n_cells: int) -> Segment:
    p = float(params.p)
    return Segment(-p, p, n_cells) if params.two_sided_kind else Segment(0.0, p, n_cells)


def _as_core_function(params: MapParams, values: np.ndarray, n_cells: int) -> GridFunction:
    seg = _core_grid(params, n_cells)
    return GridFunction(DomainKind.CORE, (seg,), [np.asarray(values, dtype=float)])


_MATRIX_CACHE: dict = {}


def _cached_matrix(params: MapParams, n_cells: int, u_max: int) -> sp.csr_matrix:
    key = (params.kind, params.p, params.beta, n_cells, u_max)
    if key not in _MATRIX_CACHE:
        if len(_MATRIX_CACHE) > 8:
            _MATRIX_CACHE.clear()
        _MATRIX_CACHE[key] = ulam_matrix(params, n_cells, u_max)
    return _MATRIX_CACHE[key]


def apply_pf(params: MapParams, h: GridFunction, u_max: int = 500) -> GridFunction:
    """Transfer operator applied to a core grid function (exact cell averages).

    Equivalent to evaluating the branch series on an infinitely fine
    subgrid and re-averaging; the reported ``meta['tail_bound']`` is the
    spec's bound for the explicitly enumerated branches (the implementation
    folds the rest in exactly, so the bound is conservative).
    """
    params.require_expanding("transfer operator")
    if h.domain != DomainKind.CORE or len(h.segments) != 1:
        raise ParameterError("apply_pf expects a single-segment core function")
    n = h.segments[0].n
    M = _cached_matrix(params, n, u_max)
    out_vals = M.T @ h.values[0]
    out = _as_core_function(params, out_vals, n)
    out.meta["tail_bound"] = series_tail_bound(params, u_max, h.sup_norm())
    return out


def apply_pf_exact_square(params: MapParams, h: GridFunction) -> GridFunction:
    """Exact cell averages of P^2[h] through the two-step composed map.

    No intermediate projection: used as the dynamics-side reference for the
    adjoint-chain identity P^2 = S*R1*T*R2* (resp. O*R5*T*R6*).
    """
    from ._transport import InvertedTransport
    params.require_expanding("transfer operator")
    if h.domain != DomainKind.CORE or len(h.segments) != 1:
        raise ParameterError("expected a single-segment core function")
    seg = h.segments[0]
    tr = InvertedTransport(params, h)
    integrals = tr.two_step_onto(seg)
    return _as_core_function(params, integrals / seg.width, seg.n)


def invariant_density(params: MapParams, n_cells: int = 4096, u_max: int = 500,
                      tol: float = 1e-10, max_iter: int = 20000) -> SpectralData:
    """Invariant density by power iteration on the Ulam matrix transpose.

    The fixed point is normalized to unit mass; positivity and the residual
    ||P rho0 - rho0||_1 are checked.  Non-convergence raises
    ConvergenceError carrying the residual history.
    """
    params.require_expanding("invariant density")
    M = _cached_matrix(params, n_cells, u_max)
    MT = M.T.tocsr()
    seg = _core_grid(params, n_cells)
    w = seg.width
    rho = np.full(n_cells, 1.0 / (n_cells * w))
    history = []
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        new = MT @ rho
        mass = new.sum() * w
        if mass <= 0:
            raise ConvergenceError("power iteration lost all mass", history)
        new /= mass
        residual = float(np.abs(new - rho).sum() * w)
        rho = new
        if it % 25 == 0 or residual <= tol:
            history.append((it, residual))
        if residual <= tol:
            break
    else:
        raise ConvergenceError(
            f"invariant density not converged: residual {residual:.3e} after {max_iter} iterations",
            history)
    rho0 = _as_core_function(params, rho, n_cells)
    norm = rho.sum() * w
    # left peripheral eigenvector should approximate the constant 1
    ones = np.ones(n_cells)
    lead = M @ ones
    for _ in range(50):
        lead = M @ lead
        lead /= np.abs(lead).max()
    phi0_dist = float(np.abs(lead - 1.0).max())
    data = SpectralData(params=params, rho0=rho0, normalization=float(norm),
                        z_spectral_radius_estimate=float("nan"),
                        ulam_cells=n_cells, residual=residual, u_max=u_max,
                        iterations=it, matrix=M, phi0_sup_distance=phi0_dist)
    data.z_spectral_radius_estimate = spectral_gap_estimate(params, data)
    return data


def apply_z(params: MapParams, h: GridFunction, spectral: SpectralData) -> GridFunction:
    """Mean-free remainder of the spectral decomposition: Z[h] = P[h] - <h,1> rho0."""
    if h.domain != DomainKind.CORE or h.segments != spectral.rho0.segments:
        raise ParameterError("grid mismatch between input and spectral data")
    ph = apply_pf(params, h, u_max=spectral.u_max)
    mass = h.mass()
    vals = ph.values[0] - mass * spectral.rho0.values[0]
    return _as_core_function(params, vals, spectral.ulam_cells)


def spectral_gap_estimate(params: MapParams, spectral: SpectralData,
                          n_probes: int = 4, n_iters: int = 24,
                          seed: int = 7) -> float:
    """Subdominant eigenvalue modulus of the Ulam matrix.

    Power iteration on the mass-free complement (the invariant density is
    projected out), estimated per the ratio (||Z^n h||/||Z^{n/2} h||)^{2/n}
    and maximized over seeded probes.  Values >= 1 are flagged."""
    M = spectral.matrix
    if M is None:
        raise ParameterError("spectral data carries no matrix")
    MT = M.T.tocsr()
    n = spectral.ulam_cells
    w = _core_grid(params, n).width
    rho = spectral.rho0.values[0]
    rng = np.random.default_rng(seed)
    best = 0.0
    half = max(1, n_iters // 2)
    for _ in range(n_probes):
        h = rng.uniform(-1.0, 1.0, n)
        h -= h.sum() / n  # mean-free: <h, 1> = 0
        norm_half = None
        v = h.copy()
        for k in range(1, n_iters + 1):
            v = MT @ v
            v -= (v.sum() * w) * rho  # re-project the rank-one part away
            if k == half:
                norm_half = np.abs(v).sum() * w
        norm_full = np.abs(v).sum() * w
        if norm_half and norm_half > 0 and norm_full > 0:
            est = (norm_full / norm_half) ** (1.0 / (n_iters - half))
            best = max(best, float(est))
    if best >= 1.0:
        raise ConvergenceError(
            f"subdominant estimate {best:.4f} >= 1: grid too coarse for a spectral gap")
    return best


def substochastic_check(params: MapParams, n_cells: int = 2048, u_max: int = 500,
                        n_iters: int = 300) -> dict:
    """Dominant eigenvalue modulus of the indicator-weighted operator, beta0 <= 1.

    The weighted Koopman operator kills mass outside [-beta, beta], so the
    discretized transfer matrix is sub-stochastic and its spectral radius is
    expected to be < 1 (no peripheral eigenvalue in this regime).
    """
    if params.beta0 > 1.0:
        raise RegimeError(f"sub-stochastic control needs beta0 <= 1, got {params.beta0:.6g}")
    beta = params.beta
    interval = (-beta, beta) if params.two_sided_kind else (0.0, beta)
    M = ulam_matrix(params, n_cells, u_max, weighted_interval=interval)
    row_sums = np.asarray(M.sum(axis=1)).ravel()
    MT = M.T.tocsr()
    rng = np.random.default_rng(3)
    v = rng.uniform(0.5, 1.0, n_cells)
    lam = 0.0
    for _ in range(n_iters):
        nv = MT @ v
        lam = float(np.abs(nv).sum() / np.abs(v).sum())
        nrm = np.abs(nv).max()
        if nrm == 0:
            lam = 0.0
            break
        v = nv / nrm
    return {
        "dominant_modulus": lam,
        "max_row_sum": float(row_sums.max()),
        "min_row_sum": float(row_sums.min()),
        "n_cells": n_cells,
    }
