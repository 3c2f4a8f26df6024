"""
Evolving population of fixed size n and the genealogies read off from it

Only effective events are generated: they arrive at rate lambda_n, involve
k >= 2 labels with probability C(n,k) lambda_{n,k} / lambda_n, a uniform
k-subset of {1..n} participates and a uniformly chosen participant is the
parent whose offspring take over the other labels.

Time is cut into blocks of fixed length; block j always draws from the
stream SeedSequence(seed, spawn_key=(n, zigzag(j))), so the realized
process does not depend on the order in which the window is extended.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from errors import DepthCapExceeded, DomainError, LogCorruptedError, OutOfWindowError, WindowShrinkError
from services.chain import BlockPath, functional_J
from services.funcspec import FunctionalSpec
from services.rates import RatesContext

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_CAP_FACTOR = 1e4


def zigzag(j: int) -> int:
    """Map ..., -2, -1, 0, 1, 2, ... to 3, 1, 0, 2, 4, ... (nonnegative spawn keys)"""
    return 2 * j if j >= 0 else -2 * j - 1


@dataclass(frozen=True)
class PopulationEvent:
    time: float
    participants: Tuple[int, ...]
    parent: int

    def __post_init__(self):
        if len(self.participants) < 2:
            raise DomainError("an event needs at least two participants")
        if self.parent not in self.participants:
            raise DomainError("the parent must be one of the participants")


@dataclass
class _EventBlock:
    times: np.ndarray
    sizes: np.ndarray
    labels: np.ndarray
    parents: np.ndarray


class EventLog:
    """
    Effective events of the population on a window [t_lo, t_hi]

    The log is single-owner mutable: extend() grows the window, extraction
    only reads.  A log restored from disk is frozen and raises
    OutOfWindowError instead of extending.
    """

    def __init__(
        self,
        ctx: Optional[RatesContext],
        n: int,
        seed: int,
        block_length: Optional[float] = None,
        depth_cap_factor: float = DEFAULT_DEPTH_CAP_FACTOR
    ):
        if n < 2:
            raise DomainError(f"population size must be >= 2, got {n}")
        self.ctx = ctx
        self.n = int(n)
        self.seed = int(seed)
        self.alpha = ctx.alpha if ctx is not None else math.nan
        self.frozen = ctx is None
        self.window: Tuple[float, float] = (0.0, 0.0)
        self._blocks: Dict[int, _EventBlock] = {}
        self._arrays = None
        if ctx is not None:
            scale = self.n ** (1.0 - self.alpha) * self.alpha * math.gamma(self.alpha)
            self.block_length = float(block_length or scale)
            self.depth_cap = depth_cap_factor * scale
            self.rate = ctx.total_rate(self.n)
            log_w = ctx._log_merger_weights(self.n)
            self._size_cdf = np.cumsum(np.exp(log_w - logsumexp(log_w)))
            self._size_cdf[-1] = 1.0
        else:
            self.block_length = math.nan
            self.depth_cap = math.inf
            self.rate = math.nan

    # ------------------------------------------------------------------
    # Generation
    # ------------------------------------------------------------------

    def _rng_for_block(self, j: int) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.n, zigzag(j)))
        return np.random.default_rng(seq)

    def _generate_block(self, j: int) -> _EventBlock:
        rng = self._rng_for_block(j)
        length = self.block_length
        count = int(rng.poisson(self.rate * length))
        times = j * length + np.sort(rng.random(count)) * length
        sizes = np.searchsorted(self._size_cdf, rng.random(count), side='right') + 2
        sizes = np.minimum(sizes, self.n).astype(np.int64)
        labels = _draw_subsets(rng, sizes, self.n)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        picks = np.floor(rng.random(count) * sizes).astype(np.int64)
        parents = labels[offsets[:-1] + picks] if count else np.empty(0, dtype=np.int64)
        if count > 1 and np.any(np.diff(times) == 0.0):
            raise LogCorruptedError(f"tied event times in block {j}")
        return _EventBlock(times, sizes, labels, parents)

    def extend(self, t_lo_new: float, t_hi_new: float) -> 'EventLog':
        """
        Grow the window to [t_lo_new, t_hi_new]

        Raises:
            WindowShrinkError: new window does not contain the current one
            OutOfWindowError: the log is frozen and the window would grow
        """
        t_lo, t_hi = self.window
        if t_lo_new > t_lo or t_hi_new < t_hi:
            raise WindowShrinkError(
                f"new window [{t_lo_new}, {t_hi_new}] does not contain [{t_lo}, {t_hi}]"
            )
        if (t_lo_new, t_hi_new) == (t_lo, t_hi):
            return self
        if self.frozen:
            raise OutOfWindowError(
                f"replayed log covers [{t_lo}, {t_hi}]; [{t_lo_new}, {t_hi_new}] needs new events"
            )
        first = math.floor(t_lo_new / self.block_length)
        last = math.ceil(t_hi_new / self.block_length) - 1
        for j in range(first, last + 1):
            if j not in self._blocks:
                self._blocks[j] = self._generate_block(j)
        self.window = (t_lo_new, t_hi_new)
        self._arrays = None
        logger.debug("event log n=%d extended to [%.6g, %.6g] (%d blocks)",
                     self.n, t_lo_new, t_hi_new, len(self._blocks))
        return self

    # ------------------------------------------------------------------
    # Views
    # ------------------------------------------------------------------

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(times, offsets, labels, parents) of the events strictly inside the window"""
        if self._arrays is None:
            self._arrays = self._collect()
        return self._arrays

    def _collect(self):
        t_lo, t_hi = self.window
        times, sizes, labels, parents = [], [], [], []
        for j in sorted(self._blocks):
            block = self._blocks[j]
            keep = (block.times > t_lo) & (block.times < t_hi)
            if not np.any(keep):
                continue
            times.append(block.times[keep])
            sizes.append(block.sizes[keep])
            parents.append(block.parents[keep])
            labels.append(block.labels[np.repeat(keep, block.sizes)])
        if not times:
            empty = np.empty(0, dtype=np.int64)
            return np.empty(0), np.zeros(1, dtype=np.int64), empty, empty
        sizes = np.concatenate(sizes)
        return (
            np.concatenate(times),
            np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
            np.concatenate(labels).astype(np.int64),
            np.concatenate(parents).astype(np.int64),
        )

    def __len__(self) -> int:
        return len(self.arrays()[0])

    @property
    def events(self) -> List[PopulationEvent]:
        times, offsets, labels, parents = self.arrays()
        return [
            PopulationEvent(float(times[i]), tuple(int(v) for v in labels[offsets[i]:offsets[i + 1]]), int(parents[i]))
            for i in range(len(times))
        ]

    @classmethod
    def from_arrays(
        cls,
        n: int,
        alpha: float,
        seed: int,
        window: Tuple[float, float],
        times: np.ndarray,
        offsets: np.ndarray,
        labels: np.ndarray,
        parents: np.ndarray
    ) -> 'EventLog':
        """Frozen log holding exactly the given events (used when replaying from disk)"""
        log = cls(None, n, seed)
        log.alpha = float(alpha)
        log.window = (float(window[0]), float(window[1]))
        times = np.asarray(times, dtype=np.float64)
        if len(times) > 1 and np.any(np.diff(times) <= 0.0):
            raise LogCorruptedError("event times are not strictly increasing")
        if len(times) and (times[0] <= log.window[0] or times[-1] >= log.window[1]):
            raise LogCorruptedError("event times fall outside the recorded window")
        log._arrays = (
            times,
            np.asarray(offsets, dtype=np.int64),
            np.asarray(labels, dtype=np.int64),
            np.asarray(parents, dtype=np.int64),
        )
        return log


def new_event_log(ctx: RatesContext, n: int, seed: int, **kwargs) -> EventLog:
    return EventLog(ctx, n, seed, **kwargs)


def extend_log(log: EventLog, t_lo_new: float, t_hi_new: float) -> EventLog:
    return log.extend(t_lo_new, t_hi_new)


def _draw_subsets(rng: np.random.Generator, sizes: np.ndarray, n: int) -> np.ndarray:
    """Uniform subsets of {1..n} with the given sizes, flattened and sorted per event"""
    total = int(np.sum(sizes))
    if total == 0:
        return np.empty(0, dtype=np.int64)
    event_of = np.repeat(np.arange(len(sizes)), sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    labels = rng.integers(1, n + 1, size=total)
    # large subsets would collide often under independent draws
    large = sizes * (sizes - 1) > n
    for e in np.flatnonzero(large):
        labels[offsets[e]:offsets[e + 1]] = rng.choice(n, size=int(sizes[e]), replace=False) + 1
    small_slots = ~large[event_of]
    while True:
        order = np.lexsort((labels, event_of))
        ev_sorted = event_of[order]
        lab_sorted = labels[order]
        dup = (ev_sorted[1:] == ev_sorted[:-1]) & (lab_sorted[1:] == lab_sorted[:-1])
        if not np.any(dup):
            break
        bad = np.zeros(len(sizes), dtype=bool)
        bad[ev_sorted[1:][dup]] = True
        redraw = bad[event_of] & small_slots
        labels[redraw] = rng.integers(1, n + 1, size=int(np.count_nonzero(redraw)))
    order = np.lexsort((labels, event_of))
    return labels[order]


# ----------------------------------------------------------------------
# Genealogy extraction
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GenealogyTrace:
    """
    Coalescent tree of the population at query_time, read backward

    merger_depths are reverse times of the effective mergers, block_counts
    the number of ancestral classes after each of them and external_depths
    the depth at which each leaf (index label - 1) first coalesces (NaN
    while still unresolved in a partial trace).
    """

    n: int
    alpha: float
    query_time: float
    merger_depths: np.ndarray
    block_counts: np.ndarray
    external_depths: np.ndarray
    complete: bool

    def block_count_at(self, depth: float) -> int:
        """Number of ancestral lineages at reverse time depth"""
        if depth < 0.0:
            raise DomainError("depth must be >= 0")
        done = int(np.searchsorted(self.merger_depths, depth, side='right'))
        if done == 0:
            return self.n
        return int(self.block_counts[done - 1])

    @property
    def path(self) -> BlockPath:
        if not self.complete:
            raise DomainError("partial trace has no complete block path")
        blocks = np.concatenate([[self.n], self.block_counts])
        gaps = np.diff(np.concatenate([[0.0], self.merger_depths]))
        ends = np.sort(self.external_depths)
        resolved = np.searchsorted(ends, self.merger_depths, side='right')
        singletons = np.concatenate([[self.n], self.n - resolved])
        return BlockPath(self.n, self.alpha, blocks, gaps, singletons)

    @property
    def external_length(self) -> float:
        return float(np.sum(self.external_depths))


def extract_tree(log: EventLog, t_query: float, max_depth: Optional[float] = None) -> GenealogyTrace:
    """
    Walk the events backward from t_query merging ancestral classes

    Each class carries its current label.  An event touching one class
    relabels it to the parent; an event touching several merges them.  Only
    events involving tracked labels are visited: an inverted index maps each
    label to its events and a heap yields the most recent pending one.

    The window is extended backward (doubling) until one class remains,
    max_depth is passed or the depth cap is hit.

    Raises:
        DepthCapExceeded: the walk reached log.depth_cap without finishing
        OutOfWindowError: a frozen log does not reach far enough back
    """
    n = log.n
    t_lo, t_hi = log.window
    if t_query > t_hi or t_query < t_lo:
        log.extend(min(t_lo, t_query), max(t_hi, t_query))
        t_lo, t_hi = log.window

    class_of = np.full(n + 1, -1, dtype=np.int64)
    class_of[1:] = np.arange(1, n + 1)
    singleton = np.ones(n + 1, dtype=bool)
    external = np.full(n, np.nan)
    live = n
    depths: List[float] = []
    counts: List[int] = []
    cursor = t_query
    reached_limit = False

    while live > 1 and not reached_limit:
        times, offsets, labels, parents = log.arrays()
        lo_idx = int(np.searchsorted(times, t_lo, side='right'))
        hi_idx = int(np.searchsorted(times, cursor, side='left'))
        if hi_idx > lo_idx:
            live, reached_limit = _walk_segment(
                times, offsets, labels, parents, lo_idx, hi_idx, t_query, max_depth,
                class_of, singleton, external, live, depths, counts
            )
        if live == 1 or reached_limit:
            break
        if max_depth is not None and t_query - t_lo >= max_depth:
            break
        if log.frozen:
            raise OutOfWindowError(
                f"replayed log starts at {t_lo}; the genealogy at {t_query} reaches further back"
            )
        if t_query - t_lo >= log.depth_cap:
            raise DepthCapExceeded(
                f"no MRCA within depth {log.depth_cap:.6g} of t={t_query} ({live} lineages left)"
            )
        span = max(t_query - t_lo, log.block_length)
        new_lo = max(t_query - 2.0 * span, t_query - log.depth_cap)
        if max_depth is not None:
            new_lo = max(new_lo, t_query - max_depth - log.block_length)
        cursor = t_lo
        log.extend(new_lo, t_hi)
        t_lo = new_lo
        # events exactly at the old boundary were outside the old window
        cursor = np.nextafter(cursor, math.inf)

    complete = live == 1
    return GenealogyTrace(
        n=n,
        alpha=log.alpha,
        query_time=float(t_query),
        merger_depths=np.asarray(depths),
        block_counts=np.asarray(counts, dtype=np.int64),
        external_depths=external,
        complete=complete,
    )


def _walk_segment(
    times, offsets, labels, parents, lo_idx, hi_idx, t_query, max_depth,
    class_of, singleton, external, live, depths, counts
):
    """Process events lo_idx..hi_idx-1 from newest to oldest; returns (live, reached_limit)"""
    seg_labels = labels[offsets[lo_idx]:offsets[hi_idx]]
    seg_sizes = np.diff(offsets[lo_idx:hi_idx + 1])
    seg_event = np.repeat(np.arange(lo_idx, hi_idx), seg_sizes)
    order = np.argsort(seg_labels, kind='stable')
    occ_labels = seg_labels[order]
    occ_events = seg_event[order]
    n = len(class_of) - 1
    starts = np.searchsorted(occ_labels, np.arange(n + 2))

    def previous_occurrence(label: int, before: int) -> int:
        lo, hi = starts[label], starts[label + 1]
        pos = int(np.searchsorted(occ_events[lo:hi], before)) - 1
        return int(occ_events[lo + pos]) if pos >= 0 else -1

    scheduled = np.full(n + 1, -1, dtype=np.int64)
    heap = []
    tracked = np.flatnonzero(class_of >= 0)
    for label in tracked:
        lo, hi = starts[label], starts[label + 1]
        if hi > lo:
            e = int(occ_events[hi - 1])
            scheduled[label] = e
            heap.append((-e, int(label)))
    heapq.heapify(heap)

    while heap and live > 1:
        neg_e, label = heapq.heappop(heap)
        e = -neg_e
        if class_of[label] < 0 or scheduled[label] != e:
            continue
        depth = t_query - times[e]
        if max_depth is not None and depth > max_depth:
            return live, True
        participants = labels[offsets[e]:offsets[e + 1]]
        matched = [int(p) for p in participants if class_of[p] >= 0]
        parent = int(parents[e])
        merged_class = int(class_of[matched[0]])
        classes = [int(class_of[p]) for p in matched]
        for p in matched:
            class_of[p] = -1
            scheduled[p] = -1
        if len(matched) >= 2:
            for c in classes:
                if singleton[c]:
                    external[c - 1] = depth
                    singleton[c] = False
            live -= len(matched) - 1
            depths.append(float(depth))
            counts.append(live)
        class_of[parent] = merged_class
        e_prev = previous_occurrence(parent, e)
        if e_prev >= 0:
            scheduled[parent] = e_prev
            heapq.heappush(heap, (-e_prev, parent))
    return live, False


def functional_series(
    log: EventLog,
    scaled_times: Sequence[float],
    f: FunctionalSpec
) -> np.ndarray:
    """J-functional of the trees at t_j = n^(1-alpha) s_j, all read from the same log"""
    s = np.asarray(scaled_times, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0:
        raise DomainError("scaled_times must be a nonempty vector")
    if np.any(np.diff(s) <= 0.0):
        raise DomainError("scaled_times must be strictly increasing")
    factor = log.n ** (1.0 - log.alpha)
    values = []
    for s_j in s:
        trace = extract_tree(log, float(s_j) * factor)
        values.append(functional_J(trace.path, f))
    return np.asarray(values)
