import os

from .errors import InputFormatError

DEFAULT_EPSILON = 1e-6
DEFAULT_THRESHOLD = 0.5
DEFAULT_RUNS = 100
DEFAULT_TOP_K = 32
DEFAULT_MAX_ORDER = 3
DEFAULT_CI_LEVEL = 0.95
DEFAULT_ALPHA = 0.05
DEFAULT_RANDOM_SAMPLES = 10

# Probability rows drifting more than this from 1 are renormalized with a warning
RENORMALIZE_TOLERANCE = 1e-6
# ... and rejected above this
REJECT_TOLERANCE = 1e-3

THREADS_ENV = 'FACTORLAB_THREADS'


def worker_count():
    """Get the number of worker threads to use.

    Reads FACTORLAB_THREADS; falls back to the number of cores.

    Returns:
        int: Positive worker count
    """
    raw = os.getenv(THREADS_ENV, '').strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        count = int(raw)
    except ValueError:
        raise InputFormatError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if count < 1:
        raise InputFormatError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return count
