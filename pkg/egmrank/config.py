import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Any, Callable, Iterable, Iterator, Mapping, TypeVar

__all__ = ("Settings",)

_log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class Settings:
    """
    .. versionadded :: 0.1.0

    Settings class to manage user defined defaults

    Parameters
    ----------
    SAMPLE_RATE : float
        Default sample rate in samples/s.
    BAND : tuple[float, float]
        Analysis band-pass edges in Hz.
    FILTER_ORDER : int
        Butterworth order per filtering pass.
    WINDOW : tuple[float, float]
        Beat window as (ms before R where it starts, ms before R where it ends).
    RANK_TOL : float
        Relative threshold used by rank estimates.
    BLOCK_THRESHOLD_MS : float
        Adjacent-electrode LAT difference that declares conduction block.
    ACTIVATION_THRESHOLD_MV : float
        Upstroke threshold for cell activation times.
    DEFLECTION_FLOOR : float
        Minimum relative deflection strength for an EGM activation time.
    SIGMA2_CLAMP : float
        Normalized sigma-2 value mapped to full scale when rendering.
    SIGMA2_WINDOW : int
        Side of the square electrode subsets used by sigma-2 maps.
    WORKERS : int
        Worker threads for pixel and beat level work. 1 runs inline.
    CHUNK_SIZE : int
        Number of cells materialized at once during synthesis.
    FMM_INIT_RADIUS : int
        Radius in cells around a stimulus initialized with exact arrival times.
    """

    SAMPLE_RATE: float = 1000.0
    BAND: tuple[float, float] = (0.33, 30.0)
    FILTER_ORDER: int = 4
    WINDOW: tuple[float, float] = (320.0, 60.0)
    RANK_TOL: float = 0.05
    BLOCK_THRESHOLD_MS: float = 12.0
    ACTIVATION_THRESHOLD_MV: float = -40.0
    DEFLECTION_FLOOR: float = 0.05
    SIGMA2_CLAMP: float = 0.25
    SIGMA2_WINDOW: int = 3
    WORKERS: int = int(os.environ.get("EGMRANK_WORKERS", "1"))
    CHUNK_SIZE: int = 2048
    FMM_INIT_RADIUS: int = 5

    @classmethod
    def snapshot(cls) -> dict:
        """
        The effective settings, for run manifests.

        Returns
        -------
        dict
            Every upper-case setting with its current value.
        """
        snap = {}
        for name in sorted(vars(cls)):
            if name.isupper():
                value = getattr(cls, name)
                snap[name] = list(value) if isinstance(value, tuple) else value
        return snap

    @classmethod
    @contextmanager
    def applied(cls, values: Mapping[str, Any]) -> Iterator[None]:
        """
        Sets the given settings for the duration of a ``with`` block and puts
        the previous values back afterwards.

        Parameters
        ----------
        values : Mapping[str, Any]
            Setting names and values, as returned by :meth:`snapshot`. Lists
            become tuples where the setting holds a tuple.

        Raises
        ------
        KeyError
            For a name that is not a setting.
        """
        unknown = sorted(name for name in values if not (name.isupper() and hasattr(cls, name)))
        if unknown:
            raise KeyError(f"unknown settings {', '.join(unknown)}")
        saved = {name: getattr(cls, name) for name in values}
        try:
            for name, value in values.items():
                if isinstance(saved[name], tuple):
                    value = tuple(value)
                setattr(cls, name, value)
            _log.debug(f"Applied {len(saved)} settings")
            yield
        finally:
            for name, value in saved.items():
                setattr(cls, name, value)

    @classmethod
    def parallel_map(
        cls, func: Callable[[T], R], items: Iterable[T], workers: int | None = None
    ) -> list[R]:
        """
        Maps ``func`` over ``items`` keeping input order.

        Parameters
        ----------
        func : Callable
            A pure function.
        items : Iterable
            The inputs.
        workers : int, optional
            Thread count, by default :attr:`WORKERS`.

        Returns
        -------
        list
            Results in input order, whatever the worker count.
        """
        workers = cls.WORKERS if workers is None else workers
        if workers <= 1:
            return [func(item) for item in items]

        _log.debug(f"Mapping over a pool of {workers} workers")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items))
