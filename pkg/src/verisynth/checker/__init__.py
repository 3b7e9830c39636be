from .graph import prob0A, prob0E, prob0_and_reach_sets, prob1A, prob1E
from .lp import dual_lp_synthesize
from .mdp import (check_spec, evaluate_policy, expected_cost_mdp, max_reach_mdp, min_reach_mdp,
                  reach_mdp)
from .result import CheckResult
from .robust import (evaluate_fsc, lift_targets, robust_value, row_vertices,
                     vertex_instantiations, worst_case_expectation)


def check(model, spec, policy=None, method="vi"):
    """Dispatch: robust analysis for interval models, exact evaluation under a
    given policy, otherwise optimization per ``spec.optimize``."""
    if model.has_intervals:
        return robust_value(model, spec, policy)
    if policy is not None:
        return evaluate_policy(model, policy, spec)
    return check_spec(model, spec, method)
