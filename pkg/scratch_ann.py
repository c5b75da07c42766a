import sys, time
sys.path.insert(0, "src")
import numpy as np
from hypergauss.gauss_maps import MapParams
from hypergauss.grids import Grids, DomainKind
from hypergauss import transfer_operator as to
from hypergauss import annihilator as ann
from hypergauss import fourier as fv

np.set_printoptions(precision=3)


def run(params, n_cells, k_hats, n_range=32, refine_steps=1):
    print(f"=== {params.label()} n={n_cells} refine={refine_steps} ===")
    t0 = time.time()
    grids = Grids.build(params, n_cells)
    sd = to.invariant_density(params, n_cells=n_cells)
    print(f"  density {time.time()-t0:.1f}s residual {sd.residual:.1e} gap {sd.z_spectral_radius_estimate:.3f}")
    hats = grids.hat_basis(k_hats)
    triples = []
    for i, f2 in enumerate(hats):
        t1 = time.time()
        tr = ann.build_annihilator(params, sd, f2, grids, refine_steps=refine_steps)
        cl = [abs(fv.coeff_line(tr, n)) for n in range(-n_range, n_range + 1)]
        ci = [abs(fv.coeff_inverted(tr, n)) for n in range(-n_range, n_range + 1)]
        l1 = tr.l1_norm()
        print(f"  hat {i}: res_i={tr.residual_i:.2e} res_disc={tr.meta['residual_discrete']:.2e} "
              f"mean={tr.residual_mean:.2e} |f|={l1:.3f} "
              f"maxline={max(cl):.2e} maxinv={max(ci):.2e} rel={(max(max(cl),max(ci))/ (1e-4*l1)):.2f} "
              f"({time.time()-t1:.1f}s)")
        triples.append(tr)
    G = ann.gram_matrix(triples)
    rank, s = ann.gram_rank(G)
    print(f"  gram rank {rank}/{k_hats} smin/smax {s[-1]/s[0]:.2e}  total {time.time()-t0:.1f}s")
    return triples


run(MapParams.two_sided(2, 5.0), 4096, 2)
run(MapParams.two_sided(2, 5.0), 2048, 2)
run(MapParams.one_sided(1, 2.5), 4096, 2)
run(MapParams.one_sided(1, 2.5), 2048, 2)
