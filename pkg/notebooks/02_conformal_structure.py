# %% [markdown]
# # Isothermal coordinates and the logarithmic conformal factor
#
# With (u, v) = (x - y, phi_x + phi_y) the metric induced by the potential is
# rho^{-1} (du^2 + dv^2), rho = phi_xx + 2 phi_xy + phi_yy.  We build the cloud
# of (u, v, rho^{-1}) samples from a solved plan, check harmonicity of
# rho^{-1} by the mean-value property, fit rho^{-1} ~ -C log r + h0 near the
# origin and check the blow-up of the Hessian trace.

# %%
import numpy as np

from kiteot import conformal as cf
from kiteot import ot_semidiscrete as sd
from kiteot.potential_analysis import PotentialField

N = 5000
field = PotentialField(sd.solve(sd.discretize_target(N, seed=0)))
cloud = cf.build_cloud(field)
rho_inv = cloud.interpolant()
print(f"{len(cloud)} samples, image inradius {cloud.inradius:.3f}")

# %%
inj = cf.injectivity_check(field)
print(f"injective: {inj.passed}  min image distance {inj.min_image_distance:.1e}  quadrants {inj.quadrants}")

# %%
harm = cf.mean_value_harmonicity(rho_inv, cf.ring_centers(0.1, 16), [0.01, 0.02, 0.03, 0.04, 0.05])
print(f"mean-value deviation of rho^-1: max {harm.max_deviation:.2%}")

# %%
r0, r1 = cf.default_radius_range(cloud)
fit = cf.fit_log_asymptotics(rho_inv, r0, r1)
print(f"C = {fit.C:.4f} +- {fit.C_se:.4f}, h0 = {fit.h0:.4f}, R^2 = {fit.r_squared:.4f}, {fit.decades:.2f} decades")
for r, a in zip(fit.profile.radii, fit.profile.averages):
    print(f"  r={r:.4f}  <rho^-1>={a:.4f}  fit={-fit.C * np.log(r) + fit.h0:.4f}")

# %%
norm = cf.normalize_coordinate(fit, rho_inv)
print(f"w = {norm.scale:.3f} z,  max |rho^-1/C + log|w|| = {norm.bound:.3f}")

# %%
blow = cf.blowup_check(cloud, np.geomspace(0.25 * cloud.inradius, 5 * cloud.spacing_uv, 12))
print(f"trace >= 2/rho - tol on {blow.trace_fraction:.2%}; identity median {blow.identity_median:.4f}")
print("circle-averaged trace, outer to inner:", np.round(blow.trace_averages, 3))

# %%
metric = cf.metric_identity_residuals(field)
print("isothermal identity residuals (median relative):", {k: round(v, 4) for k, v in metric.median_relative.items()})
