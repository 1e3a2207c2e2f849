"""Event-driven branching-process simulator of an Ebola-like outbreak.

Each infected individual runs a stochastic SEIR course: a Gamma latent
period, a Gamma infectious period during which new infections occur as a
Poisson process at a constant contact rate, symptom onset (= notification)
at the latent duration scaled by a per-person uniform factor, and a Gamma
delay from the end of infectiousness to death or recovery.  There is no
susceptible depletion: the early exponential phase is simulated directly as
a branching process, with every infectee keeping a link to its infector.

A run is retained when it reaches the notification threshold; it then
continues for a fixed follow-up window so that forward predictions can be
scored against the realized continuation.
"""

from __future__ import annotations

import csv
import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .distributions import GammaParams
from .rng import stream


class SimulationLimitError(RuntimeError):
    """Raised when a run exceeds the configured person cap."""


class AcceptanceError(RuntimeError):
    """Raised when almost every run dies out, i.e. the scenario is miswired."""


@dataclass(frozen=True)
class Scenario:
    """Full simulation configuration.

    Defaults reproduce the Ebola-like parameter set: contact rate 0.34/day
    over a mean-5-day infectious period gives R0 = 1.7, and equal latent and
    infectious rates make the implied generation-time distribution
    Gamma(3, 0.2) (mean 15 days).
    """

    contact_rate: float = 0.34
    latent: GammaParams = GammaParams(2.0, 0.2)
    infectious: GammaParams = GammaParams(1.0, 0.2)
    incubation_factor_range: tuple[float, float] = (0.8, 1.2)
    p_death: float = 0.7
    to_death: GammaParams = GammaParams(4.0 / 9.0, 1.0 / 9.0)
    to_recovery: GammaParams = GammaParams(4.0, 1.0 / 3.0)
    notify_threshold: int = 4500
    followup: float = 42.0
    master_seed: int = 0
    person_cap: int = 10_000_000

    def __post_init__(self):
        if self.contact_rate < 0:
            raise ValueError("contact_rate must be non-negative")
        if not 0.0 <= self.p_death <= 1.0:
            raise ValueError("p_death must be a probability")
        lo, hi = self.incubation_factor_range
        if not 0.0 <= lo <= hi:
            raise ValueError("incubation factor range must satisfy 0 <= lo <= hi")
        if self.notify_threshold < 1:
            raise ValueError("notify_threshold must be >= 1")
        if self.followup < 0:
            raise ValueError("followup must be non-negative")

    def R0(self) -> float:
        """Mean offspring per case: contact rate times mean infectious period."""
        return self.contact_rate * self.infectious.mean()

    def implied_generation(self) -> GammaParams:
        """Generation-time distribution implied by the SEIR course.

        Valid in the equal-rates case, where latency and transmission stages
        chain into a single Gamma with the summed shape.
        """
        if not math.isclose(self.latent.rate, self.infectious.rate, rel_tol=1e-12):
            raise ValueError(
                "closed-form generation time needs equal latent/infectious rates"
            )
        return GammaParams(self.latent.shape + self.infectious.shape, self.latent.rate)


@dataclass(frozen=True)
class PersonRecord:
    """One individual's event timeline within a trace."""

    id: int
    infector_id: Optional[int]
    t_infect: float
    t_infectious_start: float
    t_infectious_end: float
    t_symptom: float
    outcome: str            # "died", "recovered", or "pending"
    t_outcome: Optional[float]


class OutbreakTrace:
    """Columnar record of one accepted outbreak run.

    Persons are ordered (and numbered) by infection time.  ``threshold_time``
    is the moment the notification threshold was reached; the run covers
    every infection up to ``end_time = threshold_time + followup``.
    """

    def __init__(self, scenario, threshold_time, end_time, t_infect, infector,
                 t_inf_start, t_inf_end, t_symptom, died, t_outcome):
        self.scenario = scenario
        self.threshold_time = float(threshold_time)
        self.end_time = float(end_time)
        self.t_infect = t_infect
        self.infector = infector
        self.t_inf_start = t_inf_start
        self.t_inf_end = t_inf_end
        self.t_symptom = t_symptom
        self.died = died
        self.t_outcome = t_outcome
        for arr in (t_infect, infector, t_inf_start, t_inf_end, t_symptom,
                    died, t_outcome):
            arr.flags.writeable = False
        self._notified_order = None

    def __len__(self) -> int:
        return len(self.t_infect)

    def person(self, i: int) -> PersonRecord:
        pending = self.t_outcome[i] > self.end_time
        return PersonRecord(
            id=int(i),
            infector_id=None if self.infector[i] < 0 else int(self.infector[i]),
            t_infect=float(self.t_infect[i]),
            t_infectious_start=float(self.t_inf_start[i]),
            t_infectious_end=float(self.t_inf_end[i]),
            t_symptom=float(self.t_symptom[i]),
            outcome="pending" if pending else ("died" if self.died[i] else "recovered"),
            t_outcome=None if pending else float(self.t_outcome[i]),
        )

    def iter_persons(self) -> Iterator[PersonRecord]:
        return (self.person(i) for i in range(len(self)))

    @property
    def persons(self) -> list[PersonRecord]:
        return list(self.iter_persons())

    def notified_order(self) -> np.ndarray:
        """Person ids sorted by notification time (ties broken by id)."""
        if self._notified_order is None:
            self._notified_order = np.argsort(self.t_symptom, kind="stable")
        return self._notified_order

    def notified_ids(self, through: Optional[float] = None) -> np.ndarray:
        """Ids of persons notified at or before ``through`` (default: end of run)."""
        if through is None:
            through = self.end_time
        order = self.notified_order()
        n = int(np.searchsorted(self.t_symptom[order], through, side="right"))
        return order[:n]

    def to_csv(self, path) -> None:
        """One row per person; times in days with 6 decimals."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "infector_id", "t_infect", "t_inf_start",
                        "t_inf_end", "t_symptom", "outcome", "t_outcome"])
            for p in self.iter_persons():
                w.writerow([
                    p.id,
                    "" if p.infector_id is None else p.infector_id,
                    f"{p.t_infect:.6f}",
                    f"{p.t_infectious_start:.6f}",
                    f"{p.t_infectious_end:.6f}",
                    f"{p.t_symptom:.6f}",
                    p.outcome,
                    "" if p.t_outcome is None else f"{p.t_outcome:.6f}",
                ])


def simulate_outbreak(scenario: Scenario, replicate_index: int) -> Optional[OutbreakTrace]:
    """Simulate one outbreak; returns None if it dies out before the threshold.

    Draws come from the stream keyed by (scenario.master_seed,
    replicate_index), and infections are processed in chronological order,
    so a given (scenario, replicate) pair always produces a bit-identical
    trace.
    """
    rng = stream(scenario.master_seed, replicate_index)
    lat_shape, lat_scale = scenario.latent.shape, 1.0 / scenario.latent.rate
    inf_shape, inf_scale = scenario.infectious.shape, 1.0 / scenario.infectious.rate
    die_shape, die_scale = scenario.to_death.shape, 1.0 / scenario.to_death.rate
    rec_shape, rec_scale = scenario.to_recovery.shape, 1.0 / scenario.to_recovery.rate
    u_lo, u_hi = scenario.incubation_factor_range
    contact_rate = scenario.contact_rate
    p_death = scenario.p_death
    threshold = scenario.notify_threshold
    cap = scenario.person_cap

    gamma = rng.gamma
    uniform = rng.uniform
    poisson = rng.poisson
    random = rng.random
    heappush, heappop = heapq.heappush, heapq.heappop

    heap = [(0.0, 0, -1)]          # (infection time, tie-break seq, infector id)
    seq = 1
    t_infect_l: list[float] = []
    infector_l: list[int] = []
    t0_l: list[float] = []
    t1_l: list[float] = []
    t_symptom_l: list[float] = []
    died_l: list[bool] = []
    t_outcome_l: list[float] = []

    top = []                       # max-heap (negated) of smallest symptom times
    threshold_time = None
    end_time = math.inf
    n = 0
    while heap:
        t, _, parent = heappop(heap)
        if t > end_time:
            break
        pid = n
        n += 1
        if n > cap:
            raise SimulationLimitError(
                f"person cap {cap} exceeded at replicate {replicate_index}"
            )
        ell = gamma(lat_shape, lat_scale)
        dur = gamma(inf_shape, inf_scale)
        t0 = t + ell
        t1 = t0 + dur
        t_symptom = t + uniform(u_lo, u_hi) * ell
        k = poisson(contact_rate * dur)
        if k:
            for t_child in t0 + dur * random(k):
                if t_child <= end_time:
                    heappush(heap, (t_child, seq, pid))
                    seq += 1
        if random() < p_death:
            died = True
            t_out = t1 + gamma(die_shape, die_scale)
        else:
            died = False
            t_out = t1 + gamma(rec_shape, rec_scale)

        t_infect_l.append(t)
        infector_l.append(parent)
        t0_l.append(t0)
        t1_l.append(t1)
        t_symptom_l.append(t_symptom)
        died_l.append(died)
        t_outcome_l.append(t_out)

        if threshold_time is None:
            if len(top) < threshold:
                heappush(top, -t_symptom)
            elif t_symptom < -top[0]:
                heapq.heapreplace(top, -t_symptom)
            # The threshold moment is final once every unprocessed infection
            # (hence every future notification) lies beyond the current
            # threshold-th smallest symptom time.
            if len(top) == threshold and (not heap or heap[0][0] >= -top[0]):
                threshold_time = -top[0]
                end_time = threshold_time + scenario.followup

    if threshold_time is None:
        return None

    t_infect = np.array(t_infect_l)
    keep = t_infect <= end_time
    if not keep.all():
        # Possible only if infections jumped past the follow-up window while
        # the threshold was still provisional; renumber the survivors.
        idx = np.flatnonzero(keep)
        remap = -np.ones(n, dtype=np.int64)
        remap[idx] = np.arange(len(idx))
        infector = np.array(infector_l, dtype=np.int64)[idx]
        infector = np.where(infector >= 0, remap[infector], -1)
        return OutbreakTrace(
            scenario, threshold_time, end_time,
            t_infect[idx], infector,
            np.array(t0_l)[idx], np.array(t1_l)[idx],
            np.array(t_symptom_l)[idx], np.array(died_l, dtype=bool)[idx],
            np.array(t_outcome_l)[idx],
        )
    return OutbreakTrace(
        scenario, threshold_time, end_time,
        t_infect, np.array(infector_l, dtype=np.int64),
        np.array(t0_l), np.array(t1_l),
        np.array(t_symptom_l), np.array(died_l, dtype=bool),
        np.array(t_outcome_l),
    )


# ---------------------------------------------------------------------------
# ensemble running


def _apply(args):
    scenario, rep, fn = args
    trace = simulate_outbreak(scenario, rep)
    if trace is None:
        return None
    return fn(trace, rep)


def ensemble_map(
    scenario: Scenario,
    n_accepted: int,
    fn: Callable[[OutbreakTrace, int], object],
    threads: int = 1,
    max_attempts: int = 10_000,
) -> tuple[list, int]:
    """Apply ``fn`` to the first ``n_accepted`` non-extinct replicates.

    Replicates are examined in index order 0, 1, 2, ... and the accepted set
    is the first ``n_accepted`` that reach the threshold, regardless of the
    worker count, so results are reproducible under any parallelism.

    Returns (results in replicate order, attempts), where attempts counts
    the replicates examined through the last accepted one.

    Raises:
        AcceptanceError: if fewer than 1% of ``max_attempts`` replicates
            reach the threshold.
    """
    if n_accepted < 1:
        raise ValueError("n_accepted must be >= 1")
    results = []
    attempts = 0
    if threads <= 1:
        rep = 0
        while len(results) < n_accepted:
            out = _apply((scenario, rep, fn))
            rep += 1
            if out is not None:
                results.append(out)
                attempts = rep
            _check_acceptance(rep, len(results), max_attempts)
        return results, attempts

    block = max(4, 2 * threads)
    next_rep = 0
    with ProcessPoolExecutor(max_workers=threads) as pool:
        while len(results) < n_accepted:
            reps = range(next_rep, next_rep + block)
            next_rep += block
            for rep, out in zip(reps, pool.map(_apply, [(scenario, r, fn) for r in reps])):
                if out is not None and len(results) < n_accepted:
                    results.append(out)
                    attempts = rep + 1
                _check_acceptance(rep + 1, len(results), max_attempts)
    return results, attempts


def _check_acceptance(examined: int, accepted: int, max_attempts: int) -> None:
    if examined >= max_attempts and accepted < 0.01 * examined:
        raise AcceptanceError(
            f"only {accepted}/{examined} replicates reached the threshold; "
            "the scenario is unlikely to be configured as intended"
        )


def iter_accepted(
    scenario: Scenario, n_accepted: int, max_attempts: int = 10_000
) -> Iterator[tuple[int, OutbreakTrace]]:
    """Yield (replicate_index, trace) for the first accepted replicates."""
    accepted = 0
    rep = 0
    while accepted < n_accepted:
        trace = simulate_outbreak(scenario, rep)
        if trace is not None:
            accepted += 1
            yield rep, trace
        rep += 1
        _check_acceptance(rep, accepted, max_attempts)


@dataclass(frozen=True)
class SnapshotStats:
    """State of the outbreak at the moment the threshold was reached."""

    total_infected: int
    notified: int
    resolved: int
    pending_notified: int
    unnotified: int

    @property
    def notified_over_infected(self) -> float:
        return self.notified / self.total_infected


def snapshot_ratios(trace: OutbreakTrace) -> SnapshotStats:
    """Counts at threshold time: infected, notified, resolved, in-between.

    ``resolved`` counts notified persons whose death/recovery had already
    happened; ``unnotified`` counts infections whose symptoms were still to
    come.
    """
    t = trace.threshold_time
    notified = trace.t_symptom <= t
    n_notified = int(notified.sum())
    if n_notified < trace.scenario.notify_threshold:
        raise ValueError("trace did not reach its notification threshold")
    total_infected = int((trace.t_infect <= t).sum())
    resolved = int((notified & (trace.t_outcome <= t)).sum())
    return SnapshotStats(
        total_infected=total_infected,
        notified=n_notified,
        resolved=resolved,
        pending_notified=n_notified - resolved,
        unnotified=total_infected - n_notified,
    )


_EVENT_TIMES = {
    "notification": lambda tr: tr.t_symptom,
    "infection": lambda tr: tr.t_infect,
    "death": lambda tr: tr.t_outcome[tr.died],
    "recovery": lambda tr: tr.t_outcome[~tr.died],
}


def daily_series(trace: OutbreakTrace, by: str, through: Optional[float] = None) -> np.ndarray:
    """Daily event counts, day 1 anchored at the first event of the chosen kind.

    ``by`` is one of notification / infection / death / recovery; events
    after ``through`` (default: the end of the run) are excluded.
    """
    if by not in _EVENT_TIMES:
        raise ValueError(f"unknown event kind {by!r}")
    times = _EVENT_TIMES[by](trace)
    if through is None:
        through = trace.end_time
    times = times[times <= through]
    if len(times) == 0:
        return np.zeros(0, dtype=np.int64)
    t0 = times.min()
    days = np.floor(times - t0).astype(np.int64) + 1
    counts = np.bincount(days)[1:]
    return counts


@dataclass(frozen=True)
class TraceSummary:
    replicate_index: int
    threshold_time: float
    time_to_first_100: float
    time_100_to_threshold: float
    total_infected: int
    resolved: int
    pending_notified: int
    unnotified: int
    notified_over_infected: float


def summarize_trace(trace: OutbreakTrace, replicate_index: int) -> TraceSummary:
    """Per-trace scalars used by ensemble reports."""
    snap = snapshot_ratios(trace)
    order = trace.notified_order()
    t_first_100 = float(trace.t_symptom[order[99]]) if len(order) >= 100 else math.nan
    return TraceSummary(
        replicate_index=replicate_index,
        threshold_time=trace.threshold_time,
        time_to_first_100=t_first_100,
        time_100_to_threshold=trace.threshold_time - t_first_100,
        total_infected=snap.total_infected,
        resolved=snap.resolved,
        pending_notified=snap.pending_notified,
        unnotified=snap.unnotified,
        notified_over_infected=snap.notified_over_infected,
    )


@dataclass(frozen=True)
class EnsembleStats:
    """Summaries over the accepted replicates of one scenario."""

    scenario: Scenario
    n_accepted: int
    n_attempts: int
    summaries: list[TraceSummary] = field(repr=False)

    def threshold_times(self) -> np.ndarray:
        return np.array([s.threshold_time for s in self.summaries])

    def ratios(self) -> np.ndarray:
        return np.array([s.notified_over_infected for s in self.summaries])


def run_ensemble(scenario: Scenario, n_accepted: int, threads: int = 1) -> EnsembleStats:
    """Simulate until ``n_accepted`` runs reach the threshold; keep summaries."""
    summaries, attempts = ensemble_map(scenario, n_accepted, summarize_trace, threads=threads)
    return EnsembleStats(
        scenario=scenario,
        n_accepted=n_accepted,
        n_attempts=attempts,
        summaries=summaries,
    )
