import sys
sys.path.insert(0, "src")
import numpy as np
from scipy.special import digamma
from hypergauss.gauss_maps import MapParams
from hypergauss.grids import Grids, DomainKind
from hypergauss._transport import InvertedTransport

rng = np.random.default_rng(0)
params = MapParams.one_sided(1, 2.5)
grids = Grids.build(params, 64, ext_cells_per_block=16)
h = grids.random_piecewise(DomainKind.BETA_INTERVAL, rng)
tr = InvertedTransport(params, h)

t = grids.core.edges()
period = float(params.p)
beta = params.beta

def explicit_range(k_lo, k_hi):
    out = np.zeros(grids.core.n)
    for k in range(k_lo, k_hi + 1):
        out += np.diff(tr.branch_sum(beta / (t + period * k)))
    return out

far49 = tr._far_zone(t, t, +1, +1, period, 49)
for K in (100, 400, 1600, 6400, 25600):
    farK = tr._far_zone(t, t, +1, +1, period, K + 1)
    recon = explicit_range(49, K) + farK
    print(f"K={K}: self-consistency err = {np.max(np.abs(far49 - recon)):.3e}")

# also isolate: formula for a SINGLE k-range via difference of two far calls
# vs explicit: ranges [49, K)
for K in (100, 400):
    lhs = far49 - tr._far_zone(t, t, +1, +1, period, K)
    rhs = explicit_range(49, K - 1)
    print(f"[49,{K}) err = {np.max(np.abs(lhs - rhs)):.3e}")
