"""Defaults table.

Every tunable constant used by more than one module lives here so that a run
can be reproduced from its config echo alone.
"""

CFL_SAFETY = 0.4
VACUUM_THRESHOLD = 1e-12          # relative to max rho, speed-energy integrand
CLASSIFIER_TOL = 1e-9
SUPPORT_THRESHOLD = 1e-6          # relative to max rho, support radius
SUPPORT_MARGIN_CELLS = 2          # abort when support gets this close to the wall
FLOW_SUBSTEPS = 8                 # RK4 steps per splitting subinterval
BARENBLATT_RTOL = 1e-10
OT_DROP_FRACTION = 1e-14          # cells below this fraction of max are dropped
OT_EXACT_MAX_PRODUCT = 16_000_000
SINKHORN_EPS_START = 1e-1         # times diameter**p
SINKHORN_EPS_END = 1e-3
SINKHORN_STAGES = 6
SINKHORN_MAX_ITER = 10_000
SINKHORN_TOL = 1e-8
HEAT_TOL = 1e-10
HEAT_MAX_ITER = 10_000
MONOTONE_RTOL = 1e-12
LQ_SLACK_PER_LENGTH = 4.0         # C in the (1 + C h) slack of the L^q bound
CONTRACTION_SLACK = 0.1

TABLE = {
    "cfl_safety": CFL_SAFETY,
    "vacuum_threshold": VACUUM_THRESHOLD,
    "classifier_tol": CLASSIFIER_TOL,
    "support_threshold": SUPPORT_THRESHOLD,
    "support_margin_cells": SUPPORT_MARGIN_CELLS,
    "flow_substeps": FLOW_SUBSTEPS,
    "barenblatt_rtol": BARENBLATT_RTOL,
    "ot_drop_fraction": OT_DROP_FRACTION,
    "ot_exact_max_product": OT_EXACT_MAX_PRODUCT,
    "sinkhorn_eps_start": SINKHORN_EPS_START,
    "sinkhorn_eps_end": SINKHORN_EPS_END,
    "sinkhorn_stages": SINKHORN_STAGES,
    "sinkhorn_max_iter": SINKHORN_MAX_ITER,
    "sinkhorn_tol": SINKHORN_TOL,
    "heat_tol": HEAT_TOL,
    "heat_max_iter": HEAT_MAX_ITER,
    "monotone_rtol": MONOTONE_RTOL,
    "lq_slack_per_length": LQ_SLACK_PER_LENGTH,
    "contraction_slack": CONTRACTION_SLACK,
}
