"""Constants for the ddmimo channel library.

All defaults, tolerances, labels and file headers used across the
package are defined here to avoid magic numbers in the numerical modules.

Constants:
    KAPPA_DB: Default Rician factor in dB, representative of urban
        propagation.
    HALF_WAVELENGTH: Default inter-element spacing in wavelengths.
    POLARIZATIONS: Row labels of the 4xK path-loss matrix, receive
        polarization first.
    ANGLE_TOLERANCE: Slack accepted on closed angle intervals.
    ASIN_TOLERANCE: Largest asin argument overshoot that is clamped
        instead of rejected.
    PINV_RCOND: Relative singular-value cutoff of truncated pseudoinverses.
    COLLISION_THRESHOLD: Normalized correlation above which two rebuilt
        manifold columns are treated as the same path.
    ALS_MAX_ITERS, ALS_TOL, ALS_RESTARTS: Alternating least squares
        defaults.
    ALS_FIT_FLOOR: Relative fit at which ALS stops early.
    ALS_SEED_STREAM: Key deriving the ALS seed from a run seed.
    SUPPORT_RCOND: Relative singular value below which the data is taken
        to hold no further path.
    GRAM_COND_LIMIT, GRAM_LOADING: Diagonal loading rule for near-singular
        normal equations.
    HPBW_FACTOR, GRID_STEP_FACTOR: Half-power beamwidth constant and the
        half-beamwidth grid step used by the DOD initialisation.
    ARMIJO_STEP, ARMIJO_SHRINK, ARMIJO_C: Backtracking line-search
        parameters for the DOD refinement.
    DOD_GRAD_TOL: Gradient-norm threshold of the DOD descent, relative to
        the squared Frobenius norm of the sub-pilot.
    DOD_STALL_TOL: Relative objective decrease below which the DOD
        descent is considered converged.
    PHASE_REFINE_TOL: Step and cost tolerances of the joint phase polish
        of the compressed pipeline.
    GENERATOR_SEPARATION: Distance below which two receive generators
        are reported as coincident.
    DEFAULT_TRIALS: Monte-Carlo trials per sweep point.
    SELFTEST_*: Thresholds and sizes of the built-in self-tests.
    ENV_WORKERS: Environment variable holding the sweep thread count.
    EXIT_*: Process exit codes of the command-line front end.
"""

import math

KAPPA_DB = 13.2
HALF_WAVELENGTH = 0.5
WAVELENGTH = 1.0

POLARIZATIONS = ("VV", "VH", "HV", "HH")

DEFAULT_THETA_RANGE = (-math.pi / 3, math.pi / 3)
DEFAULT_VARTHETA_RANGE = (-math.pi / 3, math.pi / 3)
DEFAULT_PHI_RANGE = (0.0, math.pi / 2)

ANGLE_TOLERANCE = 1e-12
ASIN_TOLERANCE = 1e-9
PINV_RCOND = 1e-12
COLLISION_THRESHOLD = 1.0 - 1e-12
MAX_RESAMPLE_ATTEMPTS = 100

ALS_MAX_ITERS = 1000
ALS_TOL = 1e-8
ALS_RESTARTS = 10
ALS_FIT_FLOOR = 1e-13
ALS_SEED_STREAM = 1
ALS_LINE_SEARCH_START = 5
ALS_LINE_SEARCH_POWER = 2.0
ALS_LINE_SEARCH_MAX_FAIL = 4
GRAM_COND_LIMIT = 1e12
GRAM_LOADING = 1e-12
SUPPORT_RCOND = 1e-9

ML_OVERSAMPLING = 16

HPBW_FACTOR = 0.886
GRID_STEP_FACTOR = HPBW_FACTOR / 2
ARMIJO_STEP = 1.0
ARMIJO_SHRINK = 0.5
ARMIJO_C = 1e-4
ARMIJO_MAX_HALVINGS = 60
DOD_GRAD_TOL = 1e-10
DOD_MAX_STEPS = 500
DOD_STALL_TOL = 1e-10
PHASE_REFINE_TOL = 1e-12

GENERATOR_SEPARATION = 1e-6

METHOD_PARAFAC = "parafac"
METHOD_CTD = "ctd"
METHOD_LS = "ls"
METHODS = (METHOD_PARAFAC, METHOD_CTD, METHOD_LS)

AXIS_SNR = "snr_db"
AXIS_MT = "mt"
AXIS_K = "k"
AXES = (AXIS_SNR, AXIS_MT, AXIS_K)

K_POLICY_KNOWN = "known"
K_POLICY_FIXED = "fixed"

PILOT_ORTHOGONAL = "orthogonal"
PILOT_FRUGAL = "frugal"

THEOREM_KRUSKAL = "kruskal"
THEOREM_IMDF = "imdf"
THEOREM_CTD = "ctd"

DEFAULT_TRIALS = 200
FAILED_TRIAL_NMSE = 1.0

SELFTEST_NMSE_LIMIT = 1e-8
SELFTEST_GRADIENT_POINTS = 10
SELFTEST_GRADIENT_STEP = 1e-6
SELFTEST_GRADIENT_TOL = 1e-5

SWEEP_CSV_HEADER = "axis_value,method,trials,nmse_mean,nmse_median"
TRIALS_CSV_HEADER = "axis_value,method,trial,seed,nmse,wall_time_s"
CSV_FLOAT_FORMAT = ".12e"

ENV_WORKERS = "DDMIMO_WORKERS"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
