"""Wall-clock benchmark harness for the sampling strategies.

Two scenarios per (sampler, scale) pair, mirroring how subsampling is used
inside a multi-level network and how a single decimation behaves:

* ``cascade``: five successive steps keeping 25% of the points each time;
* ``single``: one draw keeping a fixed fraction (default 10%).

Rows are CSV-serializable as ``kind,n,m,rep,seconds,bytes``; cascade rows
carry the point count left after the fifth step, single rows the draw size.
The memory column is a best-effort peak-RSS delta and can legitimately be
zero when the process high-water mark was set earlier.

The Poisson-disk sampler has no direct count control, so its radius is fitted
to the requested size *before* the stopwatch starts and only the accepted
dart-throwing run is timed.
"""

from __future__ import annotations

import csv
import resource
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .rng import Rng
from .sampling import (SamplerKind, crs_soft_sample_batch, farthest_point_sample,
                       inverse_density_sample, pds_fit_radius, poisson_disk_sample,
                       random_sample)

__all__ = ["BenchRow", "BenchReport", "time_sampler", "run_cascade",
           "benchmark_samplers", "warmup", "CRS_MEMORY_BUDGET"]

CRS_MEMORY_BUDGET = 1 << 30  # refuse weight matrices beyond 1 GiB, like the paper's memory wall
_CASCADE_STEPS = 5
_IDIS_T = 16


def _peak_rss() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


@dataclass
class BenchRow:
    kind: str
    n: int
    m: int
    rep: int
    seconds: float
    bytes: int


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)
    repetitions: int = 0
    seed: int = 0
    errors: List[str] = field(default_factory=list)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "n", "m", "rep", "seconds", "bytes"])
            for row in self.rows:
                writer.writerow([row.kind, row.n, row.m, row.rep,
                                 f"{row.seconds:.9f}", row.bytes])

    def seconds(self, kind: str, n: int, m: Optional[int] = None) -> List[float]:
        return [r.seconds for r in self.rows
                if r.kind == kind and r.n == n and (m is None or r.m == m)]

    def min_seconds(self, kind: str, n: int, m: Optional[int] = None) -> float:
        values = self.seconds(kind, n, m)
        if not values:
            raise KeyError(f"no rows for {kind} at n={n}, m={m}")
        return min(values)


def warmup() -> None:
    """Trigger kernel compilation so timed runs measure the algorithms."""
    rng = Rng(0)
    coords = rng.uniforms((256, 3))
    random_sample(256, 32, rng)
    farthest_point_sample(coords, 8, 0)
    inverse_density_sample(coords, 8, t=4)
    poisson_disk_sample(coords, 0.05, rng)


def _crs_guard(n: int, m: int) -> None:
    need = n * m * 8
    if need > CRS_MEMORY_BUDGET:
        raise MemoryError(
            f"continuous relaxation needs a {m}x{n} weight matrix "
            f"(~{need / 2**30:.1f} GiB), over the {CRS_MEMORY_BUDGET / 2**30:.0f} GiB budget")


def _single_once(kind: SamplerKind, coords: np.ndarray, m: int, rng: Rng,
                 pds_radius: Optional[float], tau: float) -> None:
    n = coords.shape[0]
    if kind == SamplerKind.RS:
        random_sample(n, m, rng)
    elif kind == SamplerKind.FPS:
        farthest_point_sample(coords, m, 0)
    elif kind == SamplerKind.IDIS:
        inverse_density_sample(coords, m, t=min(_IDIS_T, n - 1))
    elif kind == SamplerKind.PDS:
        poisson_disk_sample(coords, pds_radius, rng)
    elif kind == SamplerKind.CRS:
        _crs_guard(n, m)
        scores = np.full(n, 1.0 / n)
        crs_soft_sample_batch(coords, scores, rng.gumbels((m, n)), tau)
    else:
        raise ValueError(f"unknown sampler kind {kind}")


def time_sampler(kind: SamplerKind, coords: np.ndarray, m: int, reps: int,
                 rng: Rng, pds_tolerance: float = 0.1, tau: float = 1.0) -> List[BenchRow]:
    """Wall time of `reps` single draws of m points; one row per repetition."""
    kind = SamplerKind(kind)
    n = coords.shape[0]
    pds_radius = None
    if kind == SamplerKind.PDS:
        pds_radius, _ = pds_fit_radius(coords, m, rng.child(10_000), tolerance=pds_tolerance)
    rows = []
    for rep in range(reps):
        rep_rng = rng.child(rep)
        rss_before = _peak_rss()
        t0 = time.perf_counter()
        _single_once(kind, coords, m, rep_rng, pds_radius, tau)
        dt = time.perf_counter() - t0
        rows.append(BenchRow(kind=kind.value, n=n, m=m, rep=rep, seconds=dt,
                             bytes=max(0, _peak_rss() - rss_before)))
    return rows


def run_cascade(kind: SamplerKind, coords: np.ndarray, rng: Rng,
                pds_tolerance: float = 0.25, tau: float = 1.0) -> Tuple[float, int]:
    """Total seconds for five 25%-retention steps; returns (seconds, final m).

    Per-step Poisson radii are fitted off the clock; everything else is timed.
    """
    kind = SamplerKind(kind)
    current = coords
    total = 0.0
    for step in range(_CASCADE_STEPS):
        n = current.shape[0]
        m = max(1, (n + 3) // 4)
        step_rng = rng.child(step)
        if kind == SamplerKind.RS:
            t0 = time.perf_counter()
            idx = random_sample(n, m, step_rng)
            total += time.perf_counter() - t0
            current = current[idx]
        elif kind == SamplerKind.FPS:
            t0 = time.perf_counter()
            idx = farthest_point_sample(current, m, 0)
            total += time.perf_counter() - t0
            current = current[idx]
        elif kind == SamplerKind.IDIS:
            t = min(_IDIS_T, n - 1)
            if t < 1:
                break
            t0 = time.perf_counter()
            idx = inverse_density_sample(current, m, t=t)
            total += time.perf_counter() - t0
            current = current[idx]
        elif kind == SamplerKind.PDS:
            radius, _ = pds_fit_radius(current, m, step_rng.child(10_000), tolerance=pds_tolerance)
            t0 = time.perf_counter()
            idx = poisson_disk_sample(current, radius, step_rng)
            total += time.perf_counter() - t0
            current = current[idx]
        elif kind == SamplerKind.CRS:
            _crs_guard(n, m)
            scores = np.full(n, 1.0 / n)
            gumbel = step_rng.gumbels((m, n))
            t0 = time.perf_counter()
            current = crs_soft_sample_batch(current, scores, gumbel, tau)
            total += time.perf_counter() - t0
        else:
            raise ValueError(f"unknown sampler kind {kind}")
    return total, current.shape[0]


def benchmark_samplers(scales: Sequence[int], fraction: float,
                       kinds: Sequence[SamplerKind], repetitions: int,
                       rng: Rng) -> BenchReport:
    """Single-draw and cascade timings for every (kind, scale) pair.

    Per-kind failures (for instance the relaxation sampler's memory guard at
    large scales) are recorded on the report instead of aborting the run.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    warmup()
    report = BenchReport(repetitions=repetitions, seed=rng.seed)
    for scale_pos, n in enumerate(scales):
        n = int(n)
        coords = rng.child(7_000 + scale_pos).uniforms((n, 3)) * 100.0
        for kind in kinds:
            kind = SamplerKind(kind)
            m = max(1, round(fraction * n))
            try:
                report.rows.extend(
                    time_sampler(kind, coords, m, repetitions, rng.child(8_000 + scale_pos)))
            except Exception as exc:  # per-kind failure is data, not fatal
                report.errors.append(f"{kind.value} single n={n}: {exc}")
            for rep in range(repetitions):
                try:
                    seconds, final_m = run_cascade(kind, coords, rng.child(9_000 + 13 * scale_pos + rep))
                    report.rows.append(BenchRow(kind=kind.value, n=n, m=final_m,
                                                rep=rep, seconds=seconds, bytes=0))
                except Exception as exc:
                    report.errors.append(f"{kind.value} cascade n={n}: {exc}")
                    break
    return report
