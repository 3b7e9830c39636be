from .core import (POINT_KIND, PROB_TOL, UNCERTAIN_KIND, Fsc, Interval, Model, ModelError,
                   Point, Policy, ProbEntry, Spec, entry, uniform_policy)
from .dfa import Dfa, Edge, dfa_from_dict, dfa_to_dict, reach_avoid_dfa
from .io import (ParseError, fsc_from_dict, fsc_to_dict, model_from_dict, model_to_dict,
                 parse_model, parse_spec, policy_from_dict, policy_to_dict, serialize_model,
                 spec_to_str)
from .labels import BeliefLabeling, ObservationModel, constant_sensor, grid_sensor
from .transform import (SimpleMap, expand_observations, fsc_from_product_policy, fsc_product,
                        induced_mc, is_simple, leaf_distribution, product_policy_from_fsc,
                        to_simple, to_simple_with_map)
