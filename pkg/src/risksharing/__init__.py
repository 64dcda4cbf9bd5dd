"""Risk-sharing rules over finite probability spaces and executable checks of their axioms."""

from .axioms import (
    AGGREGATE,
    FULL_ALLOCATION,
    RESHUFFLING,
    SOURCE_ANONYMOUS,
    STRONGLY_AGGREGATE,
    PropertyKind,
    PropertyReport,
    Verdict,
    Witness,
    check_aggregate,
    check_full_allocation,
    check_property,
    check_reshuffling,
    check_source_anonymous,
    check_source_anonymous_q_ratio,
    check_source_anonymous_std,
    check_strongly_aggregate,
    check_strongly_aggregate_q_ratio,
    check_strongly_aggregate_std,
    replay_witness,
)
from .battery import Battery, make_battery, permutations_for
from .errors import DegeneratePoolError, RiskSharingError
from .harness import TABLE1_EXPECTED, ClassificationMatrix, TheoremReport, classify, theorem_harness
from .metrics import BiMetric, RiskMetric, parse_bimetric, parse_metric, verify_attributes
from .prob_core import ContributionMatrix, Permutation, Pool, ProbSpace, RandomVariable, Tolerance, make_pool
from .rules import RuleSpec, apply, catalog

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
