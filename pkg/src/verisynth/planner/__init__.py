from .belief import (bayes_update, belief_digest, bernoulli_kl, binary_entropy, jsd,
                     map_labeling, sense)
from .bench import ReachAvoidInstance, gridworld, reach_avoid_instance
from .entropy import CriticalEntropy, entropy_over_critical, normalized_entropy
from .episode import VARIANTS, EpisodeTrace, PlannerConfig, run_episode, summarize, summary_csv
from .perception import active_perception_strategy, perception_tree, return_probabilities
from .product import (ProductState, RiskReport, TaskPolicy, TaskProduct, hoeffding_bound,
                      labeling_value, statistical_risk, synthesize_task_policy)
