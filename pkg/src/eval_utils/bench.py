import math
import statistics
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence

from scipy.stats import linregress


@dataclass
class PhaseStats:
    """Wall-clock summary of one phase, in seconds."""
    samples: int = 0
    median_s: float = 0.0
    mean_s: float = 0.0
    min_s: float = 0.0
    max_s: float = 0.0

    @classmethod
    def from_samples(cls, samples: List[float]) -> "PhaseStats":
        if not samples:
            return cls()
        return cls(
            samples=len(samples),
            median_s=statistics.median(samples),
            mean_s=statistics.fmean(samples),
            min_s=min(samples),
            max_s=max(samples),
        )


class PhaseTimer:
    """
    Per-phase wall-clock timer built on perf_counter_ns.

    Time spent inside `with timer.phase(name)` accumulates into the current repeat, so
    a phase entered once per target group adds up. `with timer.repeat(record)` closes a
    repeat; warm-up repeats pass record=False and are discarded. Phases timed outside
    any repeat are recorded as soon as they exit.
    """

    def __init__(self) -> None:
        self._samples: Dict[str, List[float]] = defaultdict(list)
        self._current: Dict[str, float] = defaultdict(float)
        self._in_repeat = False
        self._lock = threading.Lock()

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter_ns()
        try:
            yield
        finally:
            elapsed = (time.perf_counter_ns() - start) / 1e9
            with self._lock:
                if self._in_repeat:
                    self._current[name] += elapsed
                else:
                    self._samples[name].append(elapsed)

    @contextmanager
    def repeat(self, record: bool = True) -> Iterator[None]:
        self._current.clear()
        self._in_repeat = True
        try:
            yield
        finally:
            self._in_repeat = False
            if record:
                for name, elapsed in self._current.items():
                    self._samples[name].append(elapsed)
            self._current.clear()

    def median(self, name: str) -> float:
        samples = self._samples.get(name)
        return statistics.median(samples) if samples else 0.0

    def total(self, names: Sequence[str]) -> float:
        return sum(self.median(name) for name in names)

    def summary(self) -> Dict[str, PhaseStats]:
        return {name: PhaseStats.from_samples(samples) for name, samples in sorted(self._samples.items())}

    def medians(self) -> Dict[str, float]:
        return {name: self.median(name) for name in sorted(self._samples)}


def _fft_cost(n: int) -> float:
    return n * math.log2(max(n, 2))


def cost_ledger_2d(R: int, Q: int, Q_out: int, H: int, N_A: int, N_B: int, n_groups: int = 1) -> Dict[str, Dict[str, float]]:
    """
    Operation counts for aligning N_A images to N_B targets, split into precompute and
    per-pair phases, for the full and the rank-H computation.
    """
    per_pair_fft = N_A * N_B * _fft_cost(Q_out)
    return {
        "full": {
            "per_pair.step1": float(N_A * N_B * R * Q),
            "per_pair.step2": per_pair_fft,
        },
        "compressed": {
            "precompute.kernel": float(N_B * R * R * Q),
            "precompute.eigen": float(n_groups * R ** 3),
            "precompute.compress_images": float(n_groups * N_A * R * Q * H),
            "precompute.compress_targets": float(N_B * R * Q * H),
            "per_pair.step1": float(N_A * N_B * H * Q),
            "per_pair.step2": per_pair_fft,
        },
    }


def cost_ledger_3d(R: int, L: int, H_C: int, H_D: int, n_beta: int, N_A: int) -> Dict[str, Dict[str, float]]:
    """Operation counts for aligning N_A volumes to one target over n_beta polar angles."""
    M = 2 * L + 1
    n_lm = (L + 1) ** 2
    step3 = N_A * n_beta * _fft_cost(M * M)
    return {
        "full": {
            "precompute.wigner": float(n_beta * (L + 1) * M * M),
            "per_pair.step1": float(N_A * R * (L + 1) * M * M),
            "per_pair.step2": float(N_A * n_beta * (L + 1) * M * M),
            "per_pair.step3": step3,
        },
        "compressed": {
            "precompute.radial_kernel": float(R * R * n_lm),
            "precompute.degree_kernel": float(R * (L + 1) ** 2 * M),
            "precompute.eigen": float(R ** 3 + (L + 1) ** 3),
            "precompute.compress_volumes": float((N_A + 1) * R * n_lm * H_C),
            "precompute.wigner": float(n_beta * (L + 1) * M * M * (1 + H_D)),
            "per_pair.step1": float(N_A * H_C * (L + 1) * M * M),
            "per_pair.step1b": float(N_A * H_D * (L + 1) * M * M),
            "per_pair.step2": float(N_A * n_beta * H_D * M * M),
            "per_pair.step3": step3,
        },
    }


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> Dict[str, float]:
    """Least-squares line through (x, y) with its coefficient of determination."""
    fit = linregress(list(xs), list(ys))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue ** 2)}


def speedup(t_full: float, t_compressed: float) -> Optional[float]:
    if t_compressed <= 0.0:
        return None
    return t_full / t_compressed
