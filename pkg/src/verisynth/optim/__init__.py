from .lp import DENSE_LIMIT, LinearProgram, LpError, LpResult, solve_lp, write_mps
from .scp import (ScpConfig, StepResult, bilinear_coeffs, linearize_bilinear, scp_step,
                  trust_bounds, trust_region_constraints)
