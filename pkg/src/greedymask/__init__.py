"""Learning-based greedy design of Cartesian k-space sampling masks."""

__version__ = "0.1.0"

from .core import CandidateSpace, CartesianMask, Dataset, ImageStack, RngPolicy  # noqa: E402
from .metrics import MetricCurve, auc, nmse, psnr, ssim  # noqa: E402
from .optimize import (CoverageOracle, GreedyTrace, ModularOracle, ReconScoreOracle,  # noqa: E402
                       lbcs, llbcs, slbcs)
from .recon import ReconConfig, reconstruct  # noqa: E402
from .transform import ForwardModel, adjoint, forward  # noqa: E402

__all__ = [
    "CandidateSpace", "CartesianMask", "Dataset", "ImageStack", "RngPolicy", "MetricCurve", "auc", "nmse",
    "psnr", "ssim", "CoverageOracle", "GreedyTrace", "ModularOracle", "ReconScoreOracle", "lbcs", "llbcs",
    "slbcs", "ReconConfig", "reconstruct", "ForwardModel", "adjoint", "forward",
]
