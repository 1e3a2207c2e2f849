"""Contact-tracing samplers over a simulated outbreak trace.

Tracing works backwards: a notified case is selected, its (known, unique)
infector looked up, and the differences between their infection times
(generation time) and symptom times (serial interval) recorded.  During
exponential growth this backward view systematically shortens the observed
generation times; the samplers here reproduce that observation process so
the contraction can be measured and compared against the closed forms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .distributions import GammaParams, gamma_from_moments
from .outbreak_sim import OutbreakTrace


@dataclass(frozen=True)
class TracedPair:
    """One infector/infectee pair with both observed intervals.

    Generation times are positive by construction; serial intervals may be
    negative when the infectee shows symptoms before its infector.
    """

    infectee_id: int
    infector_id: int
    generation_time: float
    serial_interval: float


def sample_backward_pairs(trace: OutbreakTrace, n: int, stride: int) -> list[TracedPair]:
    """Systematic backward sample: every ``stride``-th notified case.

    Walks notified persons in notification order (ties broken by person id),
    counts only cases with an identifiable infector (the index case has
    none and is skipped), and selects every ``stride``-th of them until
    ``n`` pairs are collected.

    Raises:
        ValueError: if the trace has fewer than n*stride notified persons.
    """
    if n < 1 or stride < 1:
        raise ValueError("n and stride must be positive")
    order = trace.notified_order()
    if len(order) < n * stride:
        raise ValueError(
            f"trace has {len(order)} notified persons; need {n * stride}"
        )
    pairs = []
    eligible = 0
    for pid in order:
        infector = trace.infector[pid]
        if infector < 0:
            continue
        eligible += 1
        if eligible % stride == 0:
            pairs.append(
                TracedPair(
                    infectee_id=int(pid),
                    infector_id=int(infector),
                    generation_time=float(trace.t_infect[pid] - trace.t_infect[infector]),
                    serial_interval=float(trace.t_symptom[pid] - trace.t_symptom[infector]),
                )
            )
            if len(pairs) == n:
                return pairs
    raise ValueError(f"only {len(pairs)} of {n} pairs could be formed")


def sample_forward_pairs(trace: OutbreakTrace, margin: float = 60.0) -> list[TracedPair]:
    """All pairs whose infector could be observed to the end of its course.

    Forward ascertainment: include every offspring of infectors infected at
    least ``margin`` days before the end of the run (and whose infectious
    period closed within the run), so no offspring is cut off by the
    observation window.  This recovers the unbiased generation-time law,
    unlike enumerating every realized pair up to the end of the run.
    """
    cutoff = trace.end_time - margin
    ok_parent = (trace.t_infect <= cutoff) & (trace.t_inf_end <= trace.end_time)
    pairs = []
    for pid in range(len(trace)):
        infector = trace.infector[pid]
        if infector < 0 or not ok_parent[infector]:
            continue
        pairs.append(
            TracedPair(
                infectee_id=pid,
                infector_id=int(infector),
                generation_time=float(trace.t_infect[pid] - trace.t_infect[infector]),
                serial_interval=float(trace.t_symptom[pid] - trace.t_symptom[infector]),
            )
        )
    return pairs


def interval_moments(pairs: list[TracedPair]) -> tuple[float, float, float, float]:
    """Unbiased sample moments: (mean_G, var_G, mean_S, var_S)."""
    if len(pairs) < 2:
        raise ValueError("need at least two pairs for sample moments")
    g = np.array([p.generation_time for p in pairs])
    s = np.array([p.serial_interval for p in pairs])
    return (
        float(g.mean()), float(g.var(ddof=1)),
        float(s.mean()), float(s.var(ddof=1)),
    )


def split_positive(values: np.ndarray) -> tuple[np.ndarray, int]:
    """(positive values, count dropped); Gamma fits need a positive support."""
    values = np.asarray(values, dtype=float)
    keep = values > 0
    return values[keep], int((~keep).sum())


def fit_gamma_to_intervals(pairs: list[TracedPair], which: str = "G") -> GammaParams:
    """Method-of-moments Gamma fit to generation times ("G") or serials ("S").

    Non-positive intervals are outside the Gamma support and are dropped
    before fitting (raw moments via :func:`interval_moments` keep them).

    Raises:
        ValueError: fewer than 10 usable intervals, or zero variance.
    """
    if which == "G":
        values = np.array([p.generation_time for p in pairs])
    elif which == "S":
        values = np.array([p.serial_interval for p in pairs])
    else:
        raise ValueError(f"which must be 'G' or 'S', got {which!r}")
    used, _ = split_positive(values)
    if len(used) < 10:
        raise ValueError(f"only {len(used)} usable intervals; need at least 10")
    sd = used.std(ddof=1)
    if sd == 0:
        raise ValueError("intervals are constant; Gamma fit is degenerate")
    return gamma_from_moments(float(used.mean()), float(sd))


def pairs_to_csv(pairs: list[TracedPair], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["infectee_id", "infector_id", "gen_time", "serial_interval"])
        for p in pairs:
            w.writerow([
                p.infectee_id, p.infector_id,
                f"{p.generation_time:.6f}", f"{p.serial_interval:.6f}",
            ])
