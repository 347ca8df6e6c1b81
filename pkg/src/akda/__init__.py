"""Kernel discriminant analysis with several generalized-eigenproblem solvers."""

from .data import (
    LabeledDataset,
    evaluate,
    gen_circles,
    gen_gaussians,
    gen_xor,
    load_csv,
    load_libsvm,
    nearest_centroid_fit,
    split,
)
from .errors import (
    AkdaError,
    DataError,
    FitError,
    InputError,
    ModelFileError,
    SolverError,
    StateError,
)
from .kernels import KernelSpec, center_gram, gram_matrix
from .model import NdaModel, apply_constraint, fit, load_model, save_model, transform
from .solvers import SolverOptions

__version__ = "0.1.0"

__all__ = [
    "AkdaError",
    "DataError",
    "FitError",
    "InputError",
    "KernelSpec",
    "LabeledDataset",
    "ModelFileError",
    "NdaModel",
    "SolverError",
    "SolverOptions",
    "StateError",
    "apply_constraint",
    "center_gram",
    "evaluate",
    "fit",
    "gen_circles",
    "gen_gaussians",
    "gen_xor",
    "gram_matrix",
    "load_csv",
    "load_libsvm",
    "load_model",
    "nearest_centroid_fit",
    "save_model",
    "split",
    "transform",
]
