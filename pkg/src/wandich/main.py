"""Console entry point.

WD_THREADS caps the linear-algebra worker count; it must land in the
environment before numpy loads, so the heavy imports stay inside main().
"""

import os
import sys


def main(argv=None) -> int:
    threads = os.environ.get("WD_THREADS")
    if threads:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, threads)
    from .cli import run

    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
