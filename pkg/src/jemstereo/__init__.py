"""Stereo matching by joint fully/locally connected energy minimisation."""
from .cost_volume import CostParams, build_cost_volume, census, gradient_x, hamming
from .evaluation import EvalResult, avg_err, report, upsample_disparity
from .image_io import (CalibInfo, ImageIOError, parse_calib, read_image, read_pfm, to_gray,
                       write_pfm)
from .inference import (FullPairParams, InferenceConfig, LocalPairParams, NumericalError,
                        gibbs_energy, init_beliefs, local_edge_weights, mf_iteration,
                        run_inference, wta)
from .lattice import FeatureSpec, PermutohedralLattice, build_lattice, exact_filter
from .pipeline import RunConfig, match
from .postprocess import lrc_check, occlusion_fill, weighted_median

__version__ = "0.1.0"
