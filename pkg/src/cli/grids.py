"""Grid strings "start:stop[:count]" for command-line sweeps."""

from typing import List

import numpy as np

from ..core.exceptions import ModelValidationError

DEFAULT_COUNT = 16


def parse_grid(text: str, scale: str = "linear", integer: bool = False) -> List[float]:
    """
    Parse "start:stop[:count]" (or a single value) into a grid.

    Linear integer grids without a count step by one; other grids without a
    count use 16 points. Geometric grids need 0 < start.

    Args:
        text: Grid string
        scale: "linear" or "log"
        integer: Round to unique integers

    Returns:
        List of grid values in increasing order
    """
    parts = text.split(":")
    if not 1 <= len(parts) <= 3:
        raise ModelValidationError(f"malformed grid {text!r}; expected start:stop[:count]", "/grid")
    try:
        values = [float(p) for p in parts[:2]]
        count = int(parts[2]) if len(parts) == 3 else None
    except ValueError as e:
        raise ModelValidationError(f"malformed grid {text!r}: {e}", "/grid") from e

    if len(values) == 1:
        grid = np.array(values)
    else:
        start, stop = values
        if stop < start:
            raise ModelValidationError(f"grid stop {stop} is below start {start}", "/grid")
        if count is not None and count < 1:
            raise ModelValidationError("grid count must be positive", "/grid")
        if scale == "log":
            if start <= 0:
                raise ModelValidationError("geometric grids need a positive start", "/grid")
            grid = np.geomspace(start, stop, count or DEFAULT_COUNT)
        elif scale == "linear":
            if integer and count is None:
                grid = np.arange(round(start), round(stop) + 1, dtype=float)
            else:
                grid = np.linspace(start, stop, count or DEFAULT_COUNT)
        else:
            raise ModelValidationError(f"unknown grid scale {scale!r}", "/scale")

    if integer:
        return [float(v) for v in sorted(set(int(round(x)) for x in grid))]
    return [float(x) for x in grid]
