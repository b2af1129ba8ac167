"""Process-wide knobs. Deterministic regardless of thread count."""

import os

THREADS = 1


def set_threads(n=None):
    """Set FFT worker count; falls back to MRLAB_THREADS, then 1."""
    global THREADS
    if n is None:
        n = int(os.environ.get("MRLAB_THREADS", "1"))
    THREADS = max(1, int(n))
    return THREADS
