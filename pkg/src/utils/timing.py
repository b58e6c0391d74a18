"""Wall-clock timing utilities for run manifests and progress logs."""

import time

import structlog

logger = structlog.get_logger(__name__)


class Stopwatch:
    """Monotonic stopwatch usable as a context manager."""

    def __init__(self, label: str = "run"):
        """Initialize stopwatch.

        Args:
            label: Name reported in the completion log event
        """
        self.label = label
        self._start: float | None = None
        self._stop: float | None = None

    def start(self) -> "Stopwatch":
        self._start = time.perf_counter()
        self._stop = None
        return self

    def stop(self) -> float:
        if self._start is None:
            self._start = time.perf_counter()
        self._stop = time.perf_counter()
        return self.elapsed

    @property
    def elapsed(self) -> float:
        """Seconds since start (or between start and stop)."""
        if self._start is None:
            return 0.0
        end = self._stop if self._stop is not None else time.perf_counter()
        return end - self._start

    def __enter__(self) -> "Stopwatch":
        return self.start()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
        logger.debug(
            "Timed section finished",
            label=self.label,
            seconds=round(self.elapsed, 3),
            failed=exc_type is not None,
        )
