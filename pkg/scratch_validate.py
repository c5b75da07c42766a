"""Scratch validation of _transport against brute force. Not part of the package."""
import sys, time
sys.path.insert(0, "src")
import numpy as np
from hypergauss.gauss_maps import MapParams
from hypergauss.grids import Grids, DomainKind, GridFunction
from hypergauss._transport import InvertedTransport, CumulativeH, periodize_segments

rng = np.random.default_rng(0)


def brute_window_integral(params, h, lo, hi, J=200000):
    H = CumulativeH(h)
    beta = params.beta
    two = params.two_sided_kind
    js = np.arange(1, J + 1)
    alljs = np.concatenate([js, -js]) if two else js
    total = np.zeros(np.shape(lo))
    for start in range(0, len(alljs), 65536):
        blk = alljs[start:start + 65536][:, None]
        a = (2.0 if two else 1.0) * blk
        xh = beta / (a + beta / np.asarray(hi)[None, :])
        xl = beta / (a + beta / np.asarray(lo)[None, :])
        total += np.sum(H(xh) - H(xl), axis=0)
    return total


def semibrute_periodized(params, tr, target, K=3000):
    """Explicit shift sum using the (already validated) exact window integral."""
    p = float(params.p)
    beta = params.beta
    period = 2 * p if params.two_sided_kind else p
    t = target.edges()
    out = np.zeros(target.n)
    two = params.two_sided_kind
    ks = list(range(1, K + 1))
    if two:
        ks += [-k for k in range(1, K + 1)]
    for k in ks:
        y = t + period * k
        y = np.maximum(y, beta) if k > 0 else np.minimum(y, -beta)
        out += np.diff(tr.branch_sum(beta / y))
    return out


def check(tag, err, tol):
    flag = "OK " if err < tol else "FAIL"
    print(f"{flag} {tag}: {err:.3e} (tol {tol:.0e})")


def run(params, n=64):
    print(f"--- {params.label()} ---")
    grids = Grids.build(params, n, ext_cells_per_block=16)
    h = grids.random_piecewise(DomainKind.BETA_INTERVAL, rng)
    t0 = time.time()
    tr = InvertedTransport(params, h)
    print(f"  build {time.time()-t0:.2f}s  j_star={tr.j_star}")

    beta = params.beta
    if params.two_sided_kind:
        lo = np.array([beta, 1.26 * beta, -1.6 * beta, -8.0 * beta, 2.2 * beta])
        hi = np.array([1.18 * beta, 1.8 * beta, -1.04 * beta, -2.2 * beta, 60.0 * beta])
    else:
        lo = np.array([beta, 1.2 * beta, 20.0 * beta])
        hi = np.array([1.16 * beta, 4.0 * beta, 240.0 * beta])
    mine = tr.window_integral(lo, hi)
    errs = [np.max(np.abs(mine - brute_window_integral(params, h, lo, hi, J=J)))
            for J in (50000, 200000)]
    ratio = errs[0] / max(errs[1], 1e-300)
    print(f"    brute-convergence toward formula: err {errs[0]:.2e} -> {errs[1]:.2e} "
          f"(ratio {ratio:.2f}, expect ~4)")
    check("window_integral vs brute (extrapolated)", errs[1], 50 * errs[1] / max(ratio - 1, 1) + 1e-9)

    ys = np.linspace(1.2 * beta, 1.3 * beta, 4001)
    pw = tr.pointwise(ys, j_terms=100000)
    integ = np.trapezoid(pw, ys)
    mine2 = tr.window_integral(np.array([ys[0]]), np.array([ys[-1]]))[0]
    check("pointwise vs window (trapz)", abs(integ - mine2), 2e-4)

    t0 = time.time()
    out = tr.periodized_onto(grids.core)
    print(f"  periodized {time.time()-t0:.2f}s")
    sb = semibrute_periodized(params, tr, grids.core, K=4000)
    tail_scale = beta**2 * h.sup_norm() / (2 * 2 * params.p * 4000)
    check(f"periodized vs semibrute(K=4000, tail~{tail_scale:.1e})",
          np.max(np.abs(out - sb)), 20 * tail_scale)
    check("periodized mass identity", abs(np.sum(out) - h.mass()), 1e-11)

    out2 = tr.periodized_onto(grids.core, k_explicit=150)
    check("k_explicit invariance 48 vs 150", np.max(np.abs(out - out2)), 1e-11)
    tr8 = InvertedTransport(params, h, j_split=8)
    out3 = tr8.periodized_onto(grids.core)
    check("j_split invariance 24 vs 8", np.max(np.abs(out - out3)), 3e-9)

    t0 = time.time()
    ts = tr.two_step_onto(grids.core)
    print(f"  two-step {time.time()-t0:.2f}s")
    check("two-step vs periodized", np.max(np.abs(ts - out)), 1e-9)
    check("two-step mass", abs(np.sum(ts) - h.mass()), 1e-10)
    ts2 = tr.two_step_onto(grids.core, u_explicit=150)
    check("two-step u_explicit invariance", np.max(np.abs(ts - ts2)), 1e-11)

    vals, tail = tr.materialize(grids.exterior)
    pc_mass = sum(seg.width * v.sum() for seg, v in zip(grids.exterior, vals))
    check("materialize+tail mass", abs(pc_mass + tail.mass(signed=True) - h.mass()),
          max(1e-10, 2 * tail.remainder_bound))
    yfar = np.array([tail.window * 1.5, tail.window * 40.0])
    if params.two_sided_kind:
        yfar = np.concatenate([yfar, -yfar])
    check("tail model vs pointwise", np.max(np.abs(
        tail.eval(yfar) - tr.pointwise(yfar, j_terms=400000))), max(1e-10, tail.remainder_bound))


if __name__ == "__main__":
    run(MapParams.two_sided(2, 5.0))
    run(MapParams.one_sided(1, 2.5))
    run(MapParams.two_sided(1, 3.0))
    run(MapParams.one_sided(1, 1.0))
