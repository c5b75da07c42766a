import sys, time
sys.path.insert(0, "src")
import numpy as np
from scipy.special import digamma, polygamma
from hypergauss.gauss_maps import MapParams
from hypergauss.grids import DomainKind, GridFunction, Segment
from hypergauss import transfer_operator as to

# row sums
for params, n in [(MapParams.two_sided(2, 5.0), 512),
                  (MapParams.two_sided(1, 3.0), 512),
                  (MapParams.one_sided(1, 2.5), 512),
                  (MapParams.one_sided(1, 1.0), 512),
                  (MapParams.two_sided(2, 5.0), 513)]:
    t0 = time.time()
    M = to.ulam_matrix(params, n)
    rs = np.asarray(M.sum(axis=1)).ravel()
    print(params.label(), n, "row-sum err:", np.abs(rs - 1).max(), f"nnz={M.nnz}", f"{time.time()-t0:.2f}s")

# trigamma oracle: (q=1,g=1), h=1: P[1] cell avg over [a,b] = (psi(1+b)-psi(1+a))/(b-a)
params = MapParams.one_sided(1, 1.0)
n = 256
seg = Segment(0.0, 1.0, n)
h = GridFunction(DomainKind.CORE, (seg,), [np.ones(n)])
ph = to.apply_pf(params, h, u_max=500)
e = seg.edges()
oracle = (digamma(1 + e[1:]) - digamma(1 + e[:-1])) / seg.width
print("trigamma oracle err:", np.abs(ph.values[0] - oracle).max())
print("P[1](0) ~ pi^2/6:", ph.values[0][0], np.pi**2 / 6)

# two-sided h=1 oracle in the odd case (p=1, beta=3): all branches |u|>=2 full,
# P[1](x) = (beta/4)[psi1(2 - x/2) + psi1(2 + x/2)]
params_odd = MapParams.two_sided(1, 3.0)
n2 = 256
sego = Segment(-1.0, 1.0, n2)
h2 = GridFunction(DomainKind.CORE, (sego,), [np.ones(n2)])
ph2 = to.apply_pf(params_odd, h2)
e2 = sego.edges()
anti = lambda x: (3.0 / 2.0) * (digamma(2 + x / 2) - digamma(2 - x / 2))
oracle2 = (anti(e2[1:]) - anti(e2[:-1])) / sego.width
print("two-sided (odd case) trigamma oracle err:", np.abs(ph2.values[0] - oracle2).max())
params2 = MapParams.two_sided(2, 5.0)
seg2 = Segment(-2.0, 2.0, n2)

# mass preservation + positivity
rng = np.random.default_rng(1)
h3 = GridFunction(DomainKind.CORE, (seg2,), [rng.uniform(0, 1, n2)])
ph3 = to.apply_pf(params2, h3)
print("mass preservation:", abs(ph3.mass() - h3.mass()))
print("positivity:", ph3.values[0].min() >= 0)

# invariant density for Gauss map: rho = 1/(ln2 (1+x))
t0 = time.time()
sd = to.invariant_density(params, n_cells=2048, tol=1e-10)
mids = sd.rho0.segments[0].mids()
exact = 1.0 / (np.log(2.0) * (1.0 + mids))
l1 = np.abs(sd.rho0.values[0] - exact).sum() * sd.rho0.segments[0].width
print(f"gauss density L1 err @2048: {l1:.2e}  residual {sd.residual:.1e}  "
      f"gap {sd.z_spectral_radius_estimate:.4f}  phi0 {sd.phi0_sup_distance:.2e}  {time.time()-t0:.1f}s")

# two-sided density
t0 = time.time()
sd2 = to.invariant_density(params2, n_cells=2048)
print(f"two-sided: residual {sd2.residual:.1e} min rho {sd2.rho0.values[0].min():.3e} "
      f"gap {sd2.z_spectral_radius_estimate:.4f} phi0 {sd2.phi0_sup_distance:.2e} {time.time()-t0:.1f}s")
h4 = GridFunction(DomainKind.CORE, sd2.rho0.segments, [np.random.default_rng(2).uniform(-1, 1, 2048)])
z = to.apply_z(params2, h4, sd2)
print("Z mean-free:", abs(z.mass()))
zr = to.apply_z(params2, sd2.rho0, sd2)
print("Z[rho0] ~ 0:", zr.l1_norm())

# substochastic
params_sub = MapParams.two_sided(2, 1.0)
rep = to.substochastic_check(params_sub, n_cells=1024)
print("substochastic:", rep)
