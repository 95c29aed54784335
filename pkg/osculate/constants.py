"""Fixed constants for osculate (tunable values live in config.py)."""

# --- Reports ---
REPORT_SCHEMA = "osculate/1"

# --- Exit codes ---
EXIT_OK = 0
EXIT_FAILURE = 1        # a verification check failed
EXIT_CONFIG = 2         # unreadable or invalid geometry/run file

# --- Expression DSL ---
FUNCTIONS = ("sin", "cos", "exp")
TIME_VAR = "_t"         # time variable of time-dependent vector fields
CURVE_VAR = "t"         # the single variable of curve expressions
CHART_ARG_PREFIX = "u"  # chart-family maps are written over u1..un

# |denominator| below this raises DivisionByZero
DIVISION_GUARD = 1e-300

# --- Geometry ---
CONNECTION_KINDS = ("flat", "frame-parallel", "table")
ISO_CLASSES = ("abelian", "heisenberg-like", "other")
RANK_TOLERANCE = 1e-9   # singular-value cutoff for skew ranks

# --- Exponential maps ---
HANDLE_KINDS = ("frame-flow", "connection", "chart-family")
DEFAULT_HANDLES = ("fs", "conn", "chart")

# --- CLI ---
SUITES = ("group", "oracle", "expmap", "groupoid", "all")
PROBE_KINDS = ("second-order", "commutator", "transition", "convergence")

# Random samples are drawn inside this fraction of the exponential-map domain box
SAMPLE_RADIUS_FRACTION = 0.9

# --- Probe pass criteria ---
SECOND_ORDER_SLOPE = 2.9    # minimum log-log slope of the second-order residual
CONVERGENCE_ORDER = 0.9     # minimum fitted order of groupoid convergence
RATIO_GROWTH_LIMIT = 10.0   # max growth of |phi(v, t) - v| / t across the t-grid

# --- Groupoid charts ---
MAX_GRID_EXPONENT = 20      # t = 2^-k below this is lost to rounding after delta_(1/t)
ROUNDING_SLACK = 1e3        # ulps of chart-coordinate rounding tolerated by Newton
