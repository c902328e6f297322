"""Large and moderate deviations for time-changed, triangular-array and mapped models.

Submodules
----------
levy_models      cumulants and exact samplers for drivers, clocks and summands
mittag_leffler   E_nu and log E_nu
random_time      inverse-stable and subordinator time changes
legendre         numeric convex conjugates and contraction infima
rate_functions   limit cumulants and closed-form rate functions
convergence_lab  SCGF, weak-convergence and tail-decay checks
experiments      config schemas and runners behind the ``ncmd`` command
"""

__version__ = "0.1.0"

from .mittag_leffler import ml_eval, ml_log_eval  # noqa: E402,F401
