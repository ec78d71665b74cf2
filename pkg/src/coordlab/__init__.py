"""Finite-alphabet toolkit for rate-limited empirical coordination.

Submodules:
    prob_core          exact pmf/type algebra, TV, mutual information
    coordination_code  two-node and cascade codes, induced statistics, MC
    region_solver      certified rate-region boundary solvers
    oracle             brute-force baselines for small instances
    cli                command line entry points
"""

from coordlab.prob_core import (
    CondPmf,
    JointPmf,
    Pmf,
    TypeRecord,
    compose,
    conditional,
    in_delta_neighborhood,
    joint_type,
    marginal,
    mutual_information,
    total_variation,
)

__version__ = "0.1.0"

__all__ = [
    "CondPmf",
    "JointPmf",
    "Pmf",
    "TypeRecord",
    "compose",
    "conditional",
    "in_delta_neighborhood",
    "joint_type",
    "marginal",
    "mutual_information",
    "total_variation",
    "__version__",
]
