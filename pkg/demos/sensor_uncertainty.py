"""From polar sensor tolerances to rectangular noise variances.

A phasor sensor is specified by maximum relative errors on magnitude
and angle.  The filter, however, works on real/imaginary parts, so the
polar spread has to be mapped to rectangular standard deviations; the
mapping depends on where on the circle the phasor sits.
"""

import math

import numpy as np

from gridkalman.noise import PolarUncertainty, polar_to_rect_variance, uncertainty_table

print("reference sensor class: e_rho = 1e-3 pu, e_phi = 1.5e-3 rad\n")
print("delta (rad)   sigma_re      sigma_im")
for delta, s_re, s_im in uncertainty_table(magnitude=1.0, e_rho=1e-3, e_phi=1.5e-3):
    print(f"{delta:10.6f}   {s_re:.3e}    {s_im:.3e}")

# the closed form against a brute-force Monte Carlo at one awkward angle
pol = PolarUncertainty.from_max_errors(1e-3, 1.5e-3)
delta = 0.8
var_re, var_im = polar_to_rect_variance(1.0, delta, pol.sigma_m, pol.sigma_p)

rng = np.random.default_rng(99)
n = 2_000_000
rho = 1.0 + rng.normal(size=n) * pol.sigma_m
phi = delta + rng.normal(size=n) * pol.sigma_p
samples = rho * np.exp(1j * phi)
print(f"\ndelta = {delta}: closed form  var_re {var_re:.6e}  var_im {var_im:.6e}")
print(f"            monte carlo  var_re {samples.real.var():.6e}  "
      f"var_im {samples.imag.var():.6e}  ({n} draws)")

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

angles = np.linspace(0, math.pi, 200)
sig = np.array([polar_to_rect_variance(1.0, a, pol.sigma_m, pol.sigma_p)
                for a in angles])
plt.figure(figsize=(5.5, 3.8))
plt.plot(angles, np.sqrt(sig[:, 0]), label="sigma_re")
plt.plot(angles, np.sqrt(sig[:, 1]), label="sigma_im")
plt.xlabel("phasor angle (rad)")
plt.ylabel("standard deviation (pu)")
plt.legend()
out = __file__.replace(".py", ".png")
plt.savefig(out, dpi=120, bbox_inches="tight")
print("wrote", out)
