"""
CatArray Configuration
"""
import os
from dotenv import load_dotenv

load_dotenv()


class Settings:
    # Application
    APP_NAME = "CatArray"
    VERSION = "1.0.0"
    DEBUG = os.getenv("DEBUG", "False").lower() == "true"

    # Density-matrix validity checks
    HERMITICITY_TOL = float(os.getenv("CATARRAY_HERMITICITY_TOL", 1e-10))
    TRACE_TOL = float(os.getenv("CATARRAY_TRACE_TOL", 1e-8))
    POSITIVITY_TOL = float(os.getenv("CATARRAY_POSITIVITY_TOL", 1e-8))

    # Truncation diagnostics
    LEAKAGE_WARN = float(os.getenv("CATARRAY_LEAKAGE_WARN", 0.01))
    DARK_STATE_TOL = 1e-6
    DARK_FLOOR_FACTOR = 3.0         # multiple of the scaled cat truncation floor

    # Model assembly
    ZERO_RATE_REL = 1e-14
    LATTICE_TOL = 1e-12

    # Kernel / spectrum
    KERNEL_TOL_REL = float(os.getenv("CATARRAY_KERNEL_TOL", 1e-10))
    KERNEL_WARN_FACTOR = 10.0
    KERNEL_EXTEND_REL = 1e-4        # ceiling for truncation-lifted kernel eigenvalues
    KERNEL_SEPARATION = 100.0       # required ratio between kernel edge and gap
    DENSE_LIOUVILLE_MAX = int(os.getenv("CATARRAY_DENSE_LIOUVILLE_MAX", 2500))
    SOLVER_CACHE_SIZE = int(os.getenv("CATARRAY_SOLVER_CACHE", 4))
    SHIFT_SIGMA_REL = 1e-7
    SHIFT_INVERT_K = 12
    SCALE_EIGS_TOL = 1e-3
    SCALE_EIGS_MAXITER = 500
    HERMITIAN_DEFECT_MAX = 1e-6

    # Time evolution
    EIG_CONDITION_MAX = 1e10
    RK_RTOL = 1e-8
    RK_ATOL = 1e-10
    TRACE_DRIFT_TOL = 1e-6

    # Truncations (per normal mode)
    DEFAULT_M_DECAYING = 3
    M_PHI_BY_DRIVE = {
        0.5: 12,
        0.75: 16,
        1.0: 18
    }
    M_PHI_FALLBACK = 20
    M_ZENO = 40

    # Time grids (units of 1/U or 1/eta)
    TIME_GRID_START = 1e-1
    TIME_GRID_STOP = 1e5
    TIME_POINTS_PER_DECADE = 200

    # Wigner slices
    WIGNER_POINTS = 81
    WIGNER_MARGIN = 3.0
    WIGNER_REAL_TOL = 1e-10

    # CLI
    DEFAULT_JOBS = int(os.getenv("CATARRAY_JOBS", 1))
    OUTPUT_DIR = os.getenv("CATARRAY_OUTPUT_DIR", "./results")
    FLOAT_FORMAT = ".16e"


settings = Settings()
