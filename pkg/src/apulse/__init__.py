"""Active level set estimation with adaptive-prior transfer learning."""

from .acquisition import AcqKind, AcquisitionSpec, select_next
from .bench import FunctionName, SyntheticFunction, make_problem, make_uniform_grid
from .engine import RunResult, f1_score, run_lse, run_repeats
from .gp import GPConfig, GPState
from .kernels import Family, KernelSpec, kernel_eval, kernel_matrix
from .problem import Direction, Label, Problem
from .transfer import ClosedFormPrior, GPMeanPrior, TransferMode, ZeroPrior

__version__ = "0.1.0"

__all__ = [
    "AcqKind", "AcquisitionSpec", "select_next",
    "FunctionName", "SyntheticFunction", "make_problem", "make_uniform_grid",
    "RunResult", "f1_score", "run_lse", "run_repeats",
    "GPConfig", "GPState",
    "Family", "KernelSpec", "kernel_eval", "kernel_matrix",
    "Direction", "Label", "Problem",
    "ClosedFormPrior", "GPMeanPrior", "TransferMode", "ZeroPrior",
]
