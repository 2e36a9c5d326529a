"""noisepair: pseudo training-pair synthesis via initial-noise perturbation.

Turn any single image into a (perturbed, original) training pair: invert the
image's latent to its diffusion initial noise, shuffle the high-frequency
band inside the object mask, and sample back down. The surrounding machinery
covers mask preparation, batch assembly, iterative refinement, a boundary-
region evaluation harness, and a binary bridge protocol for delegating
denoising, latent codecs, and perceptual metrics to external backends.
"""

from .lattice import FrequencyGrid, LatentGrid, LowPassFilter, fft2, hadamard, ifft2, make_lpf
from .maskops import (
    BBox,
    BinaryMask,
    boundary_region,
    clean_reference_mask,
    morph,
    resample_to_latent,
    size_filter,
    to_bbox_mask,
)
from .perturb import (
    DEFAULT_STOP_FREQUENCY,
    PermutationSpec,
    PerturbMode,
    perturb_initial_noise,
    permute_masked,
    recombine,
    split_frequency,
)
from .ddim import (
    ConditioningRef,
    Denoiser,
    NoiseSchedule,
    analytic_gaussian_denoiser,
    ddim_invert,
    ddim_sample,
    zero_denoiser,
)
from .refine import RefineResult, SwapOperator, refine

__version__ = "0.1.0"
