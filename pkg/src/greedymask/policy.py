"""Sequential acquisition simulation with per-step reward logging.

The two heuristics here look at the ground truth and are therefore oracles,
not deployable policies:

* ``ZeroStepOracle`` acquires the unobserved line with the largest current
  k-space error of the reconstruction;
* ``OneStepOracle`` reconstructs once per candidate and acquires the line
  that gives the best metric at the next step.

``FixedReplay`` replays a precomputed (e.g. greedy) acquisition order.
Rewards are differences of successive metric values, oriented so that larger
is better (NMSE is negated), with no discounting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import CartesianMask, Dataset, ImageStack, ROWS
from .metrics import HIGHER_IS_BETTER, MetricCurve, aggregate_per_image, auc
from .optimize import ReconScoreOracle
from .recon import ReconConfig
from .transform import CoilSensitivities, fft2c


@dataclass(frozen=True)
class FixedReplay:
    mask: CartesianMask
    name: str = "fixed_replay"


@dataclass(frozen=True)
class ZeroStepOracle:
    norm: str = "l2"
    name: str = "zero_step_oracle"

    def __post_init__(self):
        if self.norm not in ("l2", "linf"):
            raise ValueError("norm must be 'l2' or 'linf'")


@dataclass(frozen=True)
class OneStepOracle:
    name: str = "one_step_oracle"


@dataclass
class Step:
    t: int
    line: tuple[int, int]
    reward: float
    value: float


@dataclass
class Episode:
    image_id: str
    policy: str
    init_mask: CartesianMask
    initial_value: float
    steps: list[Step] = field(default_factory=list)

    @property
    def final_mask(self) -> CartesianMask:
        return self.init_mask.add(*(s.line for s in self.steps))

    @property
    def final_value(self) -> float:
        return self.steps[-1].value if self.steps else self.initial_value

    def values(self) -> list[float]:
        """Metric value after 0, 1, ..., horizon acquired lines."""
        return [self.initial_value] + [s.value for s in self.steps]

    def to_json(self) -> str:
        return json.dumps({
            "image_id": self.image_id, "policy": self.policy,
            "init_mask": self.init_mask.to_json(), "initial_value": self.initial_value,
            "steps": [{"t": s.t, "line": list(s.line), "reward": s.reward, "value": s.value}
                      for s in self.steps],
        })


def line_errors(x: np.ndarray, x_hat: np.ndarray, orientation: str = ROWS, norm: str = "l2") -> np.ndarray:
    """``(T, n_lines)`` norm of the k-space error on every readout line."""
    err = np.abs(fft2c(x - x_hat))
    axis = -1 if orientation == ROWS else -2
    if norm == "l2":
        return np.sqrt(np.sum(err**2, axis=axis))
    return np.max(err, axis=axis)


def _candidates(mask: CartesianMask) -> list[tuple[int, int]]:
    taken = set(mask.lines)
    return [(f, l) for f in range(mask.t) for l in range(mask.n_lines) if (f, l) not in taken]


def run_policy(policy, x, recon: ReconConfig, metric: str, init_mask: CartesianMask, horizon: int,
               image_id: str = "", noise_sigma: float = 0.0, coils: CoilSensitivities | None = None,
               seed: int = 0) -> Episode:
    """Simulate ``horizon`` acquisitions on image ``x`` starting at ``init_mask``."""
    stack = x if isinstance(x, ImageStack) else ImageStack(x)
    if horizon > init_mask.total_lines - len(init_mask):
        raise ValueError("horizon exceeds the number of unobserved lines")
    oracle = ReconScoreOracle(Dataset((stack,), (image_id or "x",)), recon, metric,
                              init_mask.orientation, noise_sigma, coils, seed)
    mask = init_mask
    value = oracle(list(mask.lines))
    episode = Episode(image_id, policy.name, init_mask, value)
    replay = list(policy.mask.lines) if isinstance(policy, FixedReplay) else None
    for t in range(horizon):
        selected = list(mask.lines)
        if isinstance(policy, OneStepOracle):
            cands = _candidates(mask)
            values = np.array([oracle(selected + [c]) for c in cands])
            # same gain arithmetic and tie rule as the greedy optimizers
            j = int(np.argmax(values - value))
            line, new_value = cands[j], float(values[j])
        else:
            if isinstance(policy, FixedReplay):
                line = next((c for c in replay if c not in set(selected)), None)
                if line is None:
                    raise ValueError("replayed mask has no further lines")
            elif isinstance(policy, ZeroStepOracle):
                x_hat = oracle.reconstruct(selected)[0]
                errs = line_errors(stack.data, x_hat, mask.orientation, policy.norm)
                cands = _candidates(mask)
                line = cands[int(np.argmax([errs[c] for c in cands]))]
            else:
                raise TypeError(f"unknown policy {policy!r}")
            new_value = oracle(selected + [line])
        episode.steps.append(Step(t, tuple(line), float(new_value - value), float(new_value)))
        mask = mask.add(tuple(line))
        value = new_value
    return episode


def _budgets(rate_grid: Sequence[float], total: int) -> list[int]:
    if not rate_grid:
        raise ValueError("rate grid is empty")
    budgets = [int(round(r * total)) for r in rate_grid]
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("rate grid must map to strictly increasing line counts")
    return budgets


def episode_curve(episode: Episode, budgets: Sequence[int], metric: str) -> MetricCurve:
    """Metric (in its natural sign) at each budget along the episode."""
    vals = episode.values()
    n0 = len(episode.init_mask)
    total = episode.init_mask.total_lines
    sign = 1.0 if HIGHER_IS_BETTER[metric] else -1.0
    scores = [sign * vals[b - n0] for b in budgets]
    return MetricCurve(tuple(b / total for b in budgets), tuple(scores), metric, episode.image_id)


def compare_policies(policies: Mapping[str, object], dataset: Dataset, recon: ReconConfig, metric: str,
                     rate_grid: Sequence[float], init_mask: CartesianMask, noise_sigma: float = 0.0,
                     coils: CoilSensitivities | None = None, seed: int = 0) -> dict:
    """Run every policy on every image up to the largest rate of the grid.

    Returns ``{"episodes", "curves", "auc"}``; ``auc`` rows hold the mean and
    sample std of per-image AUCs in both the rate and acceleration views.
    """
    budgets = _budgets(rate_grid, init_mask.total_lines)
    if budgets[0] < len(init_mask):
        raise ValueError("rate grid starts below the initial mask")
    horizon = budgets[-1] - len(init_mask)
    episodes, curves, table = {}, {}, []
    for name, pol in policies.items():
        eps = [run_policy(pol, img, recon, metric, init_mask, horizon, image_id=iid,
                          noise_sigma=noise_sigma, coils=coils, seed=seed)
               for iid, img in zip(dataset.ids, dataset.samples)]
        cs = [episode_curve(e, budgets, metric) for e in eps]
        episodes[name], curves[name] = eps, cs
        for view in ("rate", "accel"):
            mean, std = aggregate_per_image(cs, view)
            table.append({"policy": name, "metric": metric, "view": view, "auc_mean": mean, "auc_std": std})
    return {"episodes": episodes, "curves": curves, "auc": table}


def per_image_auc(curves: Sequence[MetricCurve], view: str = "rate") -> list[float]:
    return [auc(c, view) for c in curves]
