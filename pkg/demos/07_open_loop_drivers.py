"""Open-loop stabilization by trace flattening and interval drivers.

The first unit interval ramps the boundary trace of the initial state to
zero; each following interval fires collared, sine-shaped inputs whose
minimum-norm coefficients cancel the leading Galerkin modes at the interval
end.  The per-interval contraction ratios and the shaped-input conditioning
are tabulated.
"""

import numpy as np

from flowstab import build_domain, build_cutoff, build_xi
from flowstab.field_ops import lift_gradient, reconstruct, stokes_eigenbasis, FlowField
from flowstab.flow_models import ReferenceTrajectory, assemble_reduced
from flowstab.openloop import TimeShaping, concatenate

grid = build_domain(1.0, 1.0, 24, 24)
patch = build_cutoff(grid)
basis = build_xi(3, patch, grid)
stokes = stokes_eigenbasis(8, grid, nu=0.05)
model = assemble_reduced(ReferenceTrajectory(grid, "zero"), stokes, basis,
                         [0.0], nu=0.05)

rng = np.random.default_rng(5)
x0 = rng.standard_normal(model.N_gal)
z = basis.P_Nperp @ rng.standard_normal(basis.n_cols)
lift = lift_gradient(basis.Q_f @ z, basis)
ve = reconstruct(x0, stokes)
v0 = FlowField(grid, ve.u + lift.u, ve.v + lift.v, lift.bc)

sh = TimeShaping(delta=0.1, M_t=3)
run = concatenate(v0, np.zeros(basis.n_cols), model, K=4, lam_target=1.0,
                  shaping=sh)
print(f"smallest mode target achieving the contraction: N = {run.N_used}")
print("interval   rho        |coeff|_F   rank")
for n, (r, c, k) in enumerate(zip(run.rho, run.coeff_norms, run.rank), start=1):
    print(f"  [{n},{n + 1}]   {r: .5f}   {c:9.3f}   {k}")
print(f"\nfitted exponential rate over interval ends: {run.fitted_rate:.3f}"
      f"  (needs >= {1.0:.1f} for the e^-1 step contraction)")
print(f"collar-weighted control energy: {run.weighted_control_energy:.4f}")
print("control vanishes identically on the delta-collars of every interval")
