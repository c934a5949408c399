"""Learn a 16x16 mask with LBCS and compare it to a polynomial VD mask.

Runs in a few seconds. The greedy mask is ordered, so every prefix is itself
a valid smaller mask.
"""

from greedymask import CandidateSpace, CartesianMask, ReconConfig, ReconScoreOracle, RngPolicy, lbcs
from greedymask.harness import BaselineConfig, baseline_mask
from greedymask.phantoms import PhantomSpec, generate_phantoms
from greedymask.transform import psf_sidelobe_ratio

n = 16
data = generate_phantoms(PhantomSpec("piecewise_blobs", n, n, count=4, shift=1, rotation=5),
                         RngPolicy(0).generator("phantoms"))
train, test = data.subset(range(3)), data.subset([3])
recon = ReconConfig("ista_wavelet", lam=1e-3, max_iters=20)

init = CartesianMask(n, n, 1, ((0, 0),))
mask, trace = lbcs(ReconScoreOracle(train, recon, "psnr"), CandidateSpace.from_mask_dims(n, n, 1, 6), init)
print("greedy order (frame, line):", mask.lines)
print("oracle calls:", trace.summary())

vds = baseline_mask(BaselineConfig("vds-poly"), 6, (n, n, 1), "rows", RngPolicy(0).generator("vds"))
# one test image and three training images: expect noisy comparisons
score = ReconScoreOracle(test, recon, "psnr")
for name, m in (("lbcs", mask), ("vds-poly", vds)):
    print(f"{name:9s} test PSNR {score(list(m.lines)):6.2f} dB  PSF sidelobe {psf_sidelobe_ratio(m):.3f}")
