"""dragkit: region-based drag editing on toy latents.

Progressive affine mask schedules, region-level feature matching with
hard-constrained latent optimization, straight-path/noise-schedule
inversion math, a point-based baseline, the evaluation metric suite, and
benchmark tooling.
"""

__version__ = "0.1.0"
