"""Greedy mask optimizers over an abstract set-function oracle.

Three selection strategies share one tie-break rule (equal gains go to the
smallest candidate index) so that their outputs can be compared exactly:

* :func:`lbcs`  -- plain greedy, every feasible candidate scored each round;
* :func:`slbcs` -- stochastic greedy with candidate batches of size ``k``,
  data batches of size ``l`` and optional per-frame cycling;
* :func:`llbcs` -- lazy greedy with a priority queue of stale upper bounds.

Diagnostics for diminishing returns, the greedy/optimum ratio and the
fixed-mask-versus-distribution comparison live at the bottom.
"""

from __future__ import annotations

import heapq
import itertools
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .core import CandidateSpace, CartesianMask, Dataset, RngPolicy
from .metrics import signed_score
from .recon import ReconConfig, reconstruct
from .transform import CoilSensitivities, ForwardModel, forward


class OracleError(RuntimeError):
    """Oracle failure, annotated with the optimizer round it happened in."""


# --------------------------------------------------------------------------
# oracles

class SetFunctionOracle:
    """Base class: ``evaluate(selection, batch)`` returns a real score.

    ``selection`` is the full candidate list of a mask (order irrelevant),
    ``batch`` an optional sorted list of data-sample indices. Counters record
    how many calls and per-sample evaluations were made.
    """

    kind = "custom"
    n_samples = 1

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.sample_evaluations = 0

    def _count(self, n_samples: int) -> None:
        with self._lock:
            self.calls += 1
            self.sample_evaluations += n_samples

    def reset_counters(self) -> None:
        self.calls = 0
        self.sample_evaluations = 0

    def __call__(self, selection: Sequence[Hashable], batch: Sequence[int] | None = None) -> float:
        batch = range(self.n_samples) if batch is None else batch
        self._count(len(batch))
        return float(self._evaluate(list(selection), list(batch)))

    evaluate = __call__

    def _evaluate(self, selection: list, batch: list[int]) -> float:
        raise NotImplementedError


class ModularOracle(SetFunctionOracle):
    kind = "modular"

    def __init__(self, weights: Sequence[float]):
        super().__init__()
        self.weights = np.asarray(weights, dtype=float)

    def _evaluate(self, selection, batch):
        return float(sum(self.weights[i] for i in selection))


class CoverageOracle(SetFunctionOracle):
    """Weighted coverage: total weight of the union of the chosen sets."""

    kind = "coverage"

    def __init__(self, sets: Sequence[Sequence[int]], weights: Mapping[int, float] | None = None):
        super().__init__()
        self.sets = [frozenset(s) for s in sets]
        self.weights = weights

    def _evaluate(self, selection, batch):
        covered = set().union(*(self.sets[i] for i in selection)) if selection else set()
        if self.weights is None:
            return float(len(covered))
        return float(sum(self.weights[e] for e in covered))


class CustomOracle(SetFunctionOracle):
    def __init__(self, fn: Callable[[list, list[int]], float], n_samples: int = 1):
        super().__init__()
        self.fn = fn
        self.n_samples = n_samples

    def _evaluate(self, selection, batch):
        return self.fn(selection, batch)


class ReconScoreOracle(SetFunctionOracle):
    """Mean reconstruction quality over a data batch for the mask made of
    the selected ``(frame, line)`` pairs.

    Measurement noise, when enabled, is drawn once per image from the seed and
    reused for every mask, so candidates are always compared on identical data.
    NMSE is negated so that larger is better for every metric.
    """

    kind = "recon_score"

    def __init__(self, dataset: Dataset, recon: ReconConfig, metric: str = "psnr",
                 orientation: str = "rows", noise_sigma: float = 0.0,
                 coils: CoilSensitivities | None = None, seed: int = 0):
        super().__init__()
        self.dataset = dataset
        self.recon = recon
        self.metric = metric
        self.h, self.w, self.t = dataset.shape
        self.orientation = orientation
        self.noise_sigma = noise_sigma
        self.coils = coils
        self.seed = seed
        self.n_samples = len(dataset)
        self._x = dataset.stack()
        self._noise = None
        if noise_sigma > 0:
            probe = ForwardModel(CartesianMask(self.h, self.w, self.t, (), orientation), 0.0, coils)
            shape = forward(probe, self._x[:1]).shape[1:]
            policy = RngPolicy(seed)
            noise = []
            for i in range(self.n_samples):
                g = policy.generator("measurement-noise", i)
                noise.append(g.standard_normal(shape) + 1j * g.standard_normal(shape))
            self._noise = noise_sigma * np.stack(noise)

    def mask(self, selection: Sequence[tuple[int, int]]) -> CartesianMask:
        return CartesianMask(self.h, self.w, self.t, tuple(selection), self.orientation)

    def reconstruct(self, selection, batch: Sequence[int] | None = None) -> np.ndarray:
        batch = list(range(self.n_samples) if batch is None else batch)
        mask = self.mask(selection)
        model = ForwardModel(mask, 0.0, self.coils)
        y = forward(model, self._x[batch])
        if self._noise is not None:
            y = y + model.indicator * self._noise[batch]
        return reconstruct(self.recon, y, mask, self.coils)

    def scores(self, selection, batch: Sequence[int] | None = None) -> np.ndarray:
        """Per-sample (signed) scores; not counted as an oracle call."""
        batch = list(range(self.n_samples) if batch is None else batch)
        x_hat = self.reconstruct(selection, batch)
        return np.atleast_1d(signed_score(self.metric, self._x[batch], x_hat, batched=True))

    def _evaluate(self, selection, batch):
        return float(np.mean(self.scores(selection, batch)))


# --------------------------------------------------------------------------
# traces

@dataclass
class RoundRecord:
    round: int
    chosen: Hashable
    gain: float
    value: float
    evaluations: int
    samples_per_evaluation: int


@dataclass
class GreedyTrace:
    algorithm: str
    records: list[RoundRecord] = field(default_factory=list)
    selection: list = field(default_factory=list)
    baseline_evaluations: int = 0
    baseline_sample_evaluations: int = 0
    exhausted: bool = False

    @property
    def candidate_evaluations(self) -> int:
        return sum(r.evaluations for r in self.records)

    @property
    def candidate_sample_evaluations(self) -> int:
        return sum(r.evaluations * r.samples_per_evaluation for r in self.records)

    @property
    def total_evaluations(self) -> int:
        return self.candidate_evaluations + self.baseline_evaluations

    def values(self) -> list[float]:
        return [r.value for r in self.records]

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            d = asdict(r)
            d["chosen"] = list(r.chosen) if isinstance(r.chosen, tuple) else r.chosen
            lines.append(json.dumps(d))
        return "\n".join(lines) + ("\n" if lines else "")

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "rounds": len(self.records),
            "candidate_evaluations": self.candidate_evaluations,
            "candidate_sample_evaluations": self.candidate_sample_evaluations,
            "baseline_evaluations": self.baseline_evaluations,
            "baseline_sample_evaluations": self.baseline_sample_evaluations,
            "exhausted": self.exhausted,
        }


# --------------------------------------------------------------------------
# helpers

def _init_items(init) -> list:
    if isinstance(init, CartesianMask):
        return list(init.lines)
    return list(init)


def _finish(init, selection, trace):
    trace.selection = list(selection)
    if isinstance(init, CartesianMask):
        return init.add(*selection[len(init):]), trace
    return list(selection), trace


def _check_start(space: CandidateSpace, selected: list) -> None:
    if len(selected) > space.budget:
        raise ValueError(f"initial mask cost {len(selected)} exceeds budget {space.budget}")
    if len(set(selected)) != len(selected):
        raise ValueError("initial mask contains duplicates")


def _evaluate_all(oracle, selected, candidates, batch, n_jobs, round_index):
    def one(item):
        try:
            return oracle(selected + [item], batch)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise OracleError(f"oracle failed in round {round_index} on {item!r}: {exc}") from exc

    if n_jobs and n_jobs > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return np.array(list(pool.map(one, candidates)), dtype=float)
    return np.array([one(c) for c in candidates], dtype=float)


def _baseline(oracle, selected, batch, trace, n_samples):
    trace.baseline_evaluations += 1
    trace.baseline_sample_evaluations += n_samples
    return oracle(selected, batch)


def _argmax_first(gains: np.ndarray) -> int:
    """Index of the largest gain, smallest index on ties (NaN never wins)."""
    if np.any(np.isnan(gains)):
        raise OracleError("oracle returned NaN")
    return int(np.argmax(gains))


# --------------------------------------------------------------------------
# optimizers

def lbcs(oracle: SetFunctionOracle, space: CandidateSpace, init=(), n_jobs: int = 1):
    """Plain greedy: each round scores every feasible unselected candidate and
    adds the one with the largest gain. Returns ``(mask_or_list, trace)``."""
    selected = _init_items(init)
    _check_start(space, selected)
    trace = GreedyTrace("lbcs")
    m = oracle.n_samples
    base = _baseline(oracle, selected, None, trace, m)
    taken = set(selected)
    r = 0
    while len(selected) < space.budget:
        feasible = [i for i, c in enumerate(space.family) if c not in taken]
        if not feasible:
            trace.exhausted = True
            break
        cands = [space.family[i] for i in feasible]
        values = _evaluate_all(oracle, selected, cands, None, n_jobs, r)
        gains = values - base
        j = _argmax_first(gains)
        trace.records.append(RoundRecord(r, cands[j], float(gains[j]), float(values[j]), len(cands), m))
        selected.append(cands[j])
        taken.add(cands[j])
        base = values[j]
        r += 1
    return _finish(init, selected, trace)


def slbcs(oracle: SetFunctionOracle, space: CandidateSpace, init=(), k: int = 1, l: int | None = None,
          cycle_frames: bool = False, rng: RngPolicy | int = 0, n_jobs: int = 1):
    """Stochastic greedy.

    Each round draws ``k`` candidates uniformly without replacement (from the
    active frame's unselected lines when ``cycle_frames``), then a data batch of
    ``l`` sample indices, and adds the best candidate of the batch. Frames are
    visited cyclically; a frame with no candidate left is skipped.
    """
    policy = rng if isinstance(rng, RngPolicy) else RngPolicy(int(rng))
    m = oracle.n_samples
    l = m if l is None else l
    if not 1 <= l <= m:
        raise ValueError(f"data batch l={l} must lie in [1, {m}]")
    groups = space.partition if cycle_frames else (tuple(range(len(space))),)
    if cycle_frames and groups is None:
        raise ValueError("cycle_frames requires a partitioned candidate space")
    if not 1 <= k <= max(len(g) for g in groups):
        raise ValueError(f"candidate batch k={k} out of range")
    selected = _init_items(init)
    _check_start(space, selected)
    taken = set(selected)
    trace = GreedyTrace("slbcs")
    frame = 0
    r = 0
    while len(selected) < space.budget:
        pool = []
        for _ in range(len(groups)):
            pool = [i for i in groups[frame] if space.family[i] not in taken]
            if pool:
                break
            frame = (frame + 1) % len(groups)
        if not pool:
            trace.exhausted = True
            break
        g = policy.generator("slbcs", r)
        picked = sorted(int(i) for i in g.choice(pool, size=min(k, len(pool)), replace=False))
        batch = sorted(int(i) for i in g.choice(m, size=l, replace=False))
        cands = [space.family[i] for i in picked]
        base = _baseline(oracle, selected, batch, trace, l)
        values = _evaluate_all(oracle, selected, cands, batch, n_jobs, r)
        gains = values - base
        j = _argmax_first(gains)
        trace.records.append(RoundRecord(r, cands[j], float(gains[j]), float(values[j]), len(cands), l))
        selected.append(cands[j])
        taken.add(cands[j])
        frame = (frame + 1) % len(groups)
        r += 1
    return _finish(init, selected, trace)


def llbcs(oracle: SetFunctionOracle, space: CandidateSpace, init=(), refresh_period: int | None = None,
          n_jobs: int = 1):
    """Lazy greedy with upper bounds initialised to +inf.

    The candidate with the largest bound is re-scored; it is accepted once its
    fresh gain still tops every other bound, otherwise it goes back into the
    queue. With ``refresh_period`` every bound is recomputed every that many
    rounds. Negative gains are allowed.
    """
    if refresh_period is not None and refresh_period < 1:
        raise ValueError("refresh_period must be >= 1")
    selected = _init_items(init)
    _check_start(space, selected)
    taken = set(selected)
    trace = GreedyTrace("llbcs")
    m = oracle.n_samples
    base = _baseline(oracle, selected, None, trace, m)
    heap = [(-np.inf, i) for i, c in enumerate(space.family) if c not in taken]
    heapq.heapify(heap)
    fresh_in: dict[int, int] = {}
    value_of: dict[int, float] = {}
    r = 0
    while len(selected) < space.budget:
        if not heap:
            trace.exhausted = True
            break
        evaluations = 0
        if refresh_period and r > 0 and r % refresh_period == 0:
            idx = sorted(i for _, i in heap)
            vals = _evaluate_all(oracle, selected, [space.family[i] for i in idx], None, n_jobs, r)
            evaluations += len(idx)
            heap = [(-(v - base), i) for i, v in zip(idx, vals)]
            heapq.heapify(heap)
            for i, v in zip(idx, vals):
                fresh_in[i], value_of[i] = r, float(v)
        while True:
            neg, i = heap[0]
            if fresh_in.get(i) == r:
                heapq.heappop(heap)
                break
            heapq.heappop(heap)
            try:
                v = oracle(selected + [space.family[i]], None)
            except Exception as exc:  # noqa: BLE001
                raise OracleError(f"oracle failed in round {r} on {space.family[i]!r}: {exc}") from exc
            if np.isnan(v):
                raise OracleError("oracle returned NaN")
            evaluations += 1
            fresh_in[i], value_of[i] = r, v
            heapq.heappush(heap, (-(v - base), i))
        chosen = space.family[i]
        trace.records.append(RoundRecord(r, chosen, float(-neg), value_of[i], evaluations, m))
        selected.append(chosen)
        taken.add(chosen)
        base = value_of[i]
        r += 1
    return _finish(init, selected, trace)


# --------------------------------------------------------------------------
# diagnostics

def check_diminishing_returns(oracle: SetFunctionOracle, space: CandidateSpace, trials: int,
                              rng: np.random.Generator, tol: float = 1e-12) -> dict:
    """Sample nested pairs w1 <= w2 and an element i outside w2, and count
    violations of  f(w1+i) - f(w1) >= f(w2+i) - f(w2)."""
    n = len(space)
    if n < 2:
        raise ValueError("need at least two candidates")
    violations = 0
    worst = 0.0
    for _ in range(trials):
        perm = rng.permutation(n)
        s2 = int(rng.integers(0, n))
        s1 = int(rng.integers(0, s2 + 1))
        items = [space.family[j] for j in perm]
        w1, w2, i = items[:s1], items[:s2], items[s2]
        g1 = oracle(w1 + [i]) - oracle(w1)
        g2 = oracle(w2 + [i]) - oracle(w2)
        if g1 < g2 - tol:
            violations += 1
            worst = max(worst, g2 - g1)
    return {"violations": violations, "total": trials,
            "fraction": violations / trials if trials else 0.0, "max_violation": worst}


def _exhaustive(oracle, space: CandidateSpace, sizes) -> dict[frozenset, float]:
    idx = range(len(space))
    table = {}
    for s in sizes:
        for combo in itertools.combinations(idx, s):
            table[frozenset(combo)] = oracle([space.family[i] for i in combo])
    return table


def nemhauser_gap(oracle: SetFunctionOracle, space: CandidateSpace, budget: int | None = None) -> float:
    """Ratio of the greedy value to the exhaustive optimum over |w| <= budget."""
    budget = space.budget if budget is None else budget
    if len(space) > 20 or budget > 6:
        raise ValueError("instance too large for exhaustive search (|S| <= 20, budget <= 6)")
    space = CandidateSpace(space.family, budget, space.partition)
    selection, _ = lbcs(oracle, space)
    greedy = oracle(selection)
    opt = max(_exhaustive(oracle, space, range(budget + 1)).values())
    if opt <= 0:
        return 1.0 if greedy >= opt else 0.0
    return greedy / opt


def best_mask_dominates_distributions(oracle: SetFunctionOracle, space: CandidateSpace, budget: int,
                                      distributions: Mapping[str, Sequence[float]], mc_draws: int,
                                      rng: np.random.Generator) -> dict:
    """Compare the best fixed mask of size ``budget`` with the expected value
    of masks drawn without replacement from each probability vector.

    A distribution named ``"argmax_support"`` (uniform on the best mask) is
    always added; it must reproduce the best value exactly.
    """
    n = len(space)
    table = _exhaustive(oracle, space, [budget])
    best_set, best = max(table.items(), key=lambda kv: (kv[1], [-i for i in sorted(kv[0])]))
    dists = dict(distributions)
    support = np.zeros(n)
    support[sorted(best_set)] = 1.0 / budget
    dists["argmax_support"] = support
    report = {"best_value": best, "best_mask": sorted(best_set), "distributions": {}}
    for name, pmf in dists.items():
        pmf = np.asarray(pmf, dtype=float)
        if pmf.shape != (n,) or np.any(pmf < 0) or np.count_nonzero(pmf) < budget:
            raise ValueError(f"distribution {name!r} cannot draw {budget} distinct elements")
        pmf = pmf / pmf.sum()
        vals = np.array([table[frozenset(int(i) for i in rng.choice(n, size=budget, replace=False, p=pmf))]
                         for _ in range(mc_draws)])
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / np.sqrt(mc_draws)) if mc_draws > 1 else 0.0
        report["distributions"][name] = {
            # the mean of identical floats can exceed them by an ulp
            "mc_mean": mean, "mc_stderr": stderr, "holds": best >= mean - 1e-12 * max(1.0, abs(best)),
            "gap": best - mean,
        }
    return report
