"""Cardinality-constrained semi-supervised support vector machines."""

from .bb import BbOptions, BbStatus, MiqpSolution, brute_force_miqp, solve_miqp
from .dataset import Dataset, Instance, Sample
from .models import (FeasiblePoint, Hyperplane, PenaltyConfig, big_m_initial, big_m_update, build_clustered,
                     build_cs3vm, build_fixing_problem, build_reduced_problem, build_svm, lift_clustered_solution,
                     lift_svm_solution, solve_svm)
from .qp import QpProblem, QpSolution, QpStatus, solve_qp
from .rcm import RcmConfig, RcmResult, ircm, rcm
from .wircm import WircmConfig, WircmResult, wircm

__all__ = [
    "BbOptions", "BbStatus", "Dataset", "FeasiblePoint", "Hyperplane", "Instance", "MiqpSolution", "PenaltyConfig",
    "QpProblem", "QpSolution", "QpStatus", "RcmConfig", "RcmResult", "Sample", "WircmConfig", "WircmResult",
    "big_m_initial", "big_m_update", "brute_force_miqp", "build_clustered", "build_cs3vm", "build_fixing_problem",
    "build_reduced_problem", "build_svm", "ircm", "lift_clustered_solution", "lift_svm_solution", "rcm",
    "solve_miqp", "solve_qp", "solve_svm", "wircm",
]
