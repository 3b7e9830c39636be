from .parametric import (GraphError, ParametricModel, Poly, is_parametric_json,
                         parametric_from_dict, parse_parametric, sample_values)
from .report import SynthReport
from .scp_param import certify_instantiation, scp_param_synthesis
from .robust_fsc import memoryless_scp_synthesis, robust_fsc_synthesis
from .scenario import (ScenarioConfig, bisect_nu, confidence_bound, sample_interval_model,
                       scenario_verify)
