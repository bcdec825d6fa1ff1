"""Safe pattern pruning for sparse Elastic-Net models over itemset and sequence patterns."""

from .data import (
    Dataset,
    Hyperparams,
    Pattern,
    ReferenceSolution,
    SupportColumn,
    dump_dataset,
    format_pattern,
    load_dataset,
    parse_dataset,
    parse_pattern,
)
from .kernels import BACKEND
from .objective import LogisticLoss, SquaredLoss, get_loss
from .path import FoldPlan, PathGrid, cv_path, lambda_max, make_grid, path_2d, select_hyperparams
from .solver import ConvergenceError, fit
from .tree import PatternTree, enumerate_all

__version__ = "0.1.0"
