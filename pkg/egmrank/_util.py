import logging
import math

import numpy as np

_log = logging.getLogger(__name__)


def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _ms_to_samples(ms: float, rate: float, exact: bool = False) -> int:
    value = ms * rate / 1000.0
    nearest = int(round(value))
    if exact and not math.isclose(value, nearest, rel_tol=0.0, abs_tol=1e-9):
        raise ValueError(f"{ms} ms is not a whole number of samples at {rate} samples/s")
    return nearest


def _samples_to_ms(samples: float, rate: float) -> float:
    return samples * 1000.0 / rate


def _frmt_float(value: float) -> str:
    # 17 significant digits round-trip any float64
    return format(float(value), ".17g")


def _grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """4-adjacent channel pairs of a row-major grid, lower index first."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            idx = r * cols + c
            if c + 1 < cols:
                edges.append((idx, idx + 1))
            if r + 1 < rows:
                edges.append((idx, idx + cols))
    return edges


def _parse_pair(text: str, sep: str = ":") -> tuple[float, float]:
    parts = text.split(sep)
    if len(parts) != 2:
        raise ValueError(f"expected two values separated by {sep!r}, got {text!r}")
    return float(parts[0]), float(parts[1])
