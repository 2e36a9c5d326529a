"""
DDIM inversion round trips with analytic denoisers
==================================================

The zero denoiser makes invert/sample exact mutual inverses at any step
count; the Gaussian-score denoiser has the standard first-order inversion
mismatch that shrinks as the trajectory is refined.
"""

import numpy as np

from noisepair.ddim import NoiseSchedule, analytic_gaussian_denoiser, ddim_invert, ddim_sample, zero_denoiser
from noisepair.lattice import LatentGrid

z0 = LatentGrid(np.random.default_rng(0).standard_normal((3, 16, 16)))


def roundtrip_error(denoiser_factory, steps):
    schedule = NoiseSchedule.linear_beta(steps)
    den = denoiser_factory(schedule)
    back = ddim_sample(ddim_invert(z0, den, schedule)[-1], den, schedule)
    return float(np.linalg.norm(back.data - z0.data) / np.linalg.norm(z0.data))


print("steps | zero denoiser | gaussian-score denoiser")
print("------+---------------+------------------------")
for steps in (25, 50, 100, 200, 400):
    zero_err = roundtrip_error(lambda s: zero_denoiser(), steps)
    gauss_err = roundtrip_error(analytic_gaussian_denoiser, steps)
    print(f"{steps:5d} | {zero_err:13.2e} | {gauss_err:.6f}")

print()
print("zero-denoiser trajectories collapse to exact scalings; the gaussian")
print("column halves with each doubling of steps (first-order mismatch).")
