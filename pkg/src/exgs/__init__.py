"""Training-free compression of Gaussian-splat scenes: significance scoring,
voxel-guaranteed pruning, opacity amplification, binary16 + LZMA packing, a
CPU rasterizer for renders and visibility masks, and image metrics."""

from .codec import compress, decompress, half_round_trip, ratio_report
from .errors import (CapacityError, CorruptionError, ExgsError, FormatError, InvalidParameterError, SchemaError,
                     TruncationError, UnsupportedFormatError, UnsupportedVersionError)
from .metrics import psnr, ssim
from .model import Camera, Gaussian, GaussianCloud, activate_covariance, activate_opacity, sh_to_color
from .ply import load_ply, save_ply
from .pruner import PruneConfig, VoxelIndex, amplify, prune, voxelize
from .rasterizer import RenderConfig, RenderOutput, project_gaussian, render, render_reference, render_visibility_mask
from .restore import RestoreRequest, inpaint_baseline
from .significance import SignificanceVector, compute_significance, compute_significance_oracle
from .synth import SynthSpec, make_orbit_cameras, make_scene

__version__ = "0.1.0"
