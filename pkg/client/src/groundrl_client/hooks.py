"""Integration example: plugging the client into a rollout-scoring hook.

RL frameworks usually expect a callable mapping a group of sampled
completions to per-completion scalars.  ``make_rollout_scoring_hook``
builds exactly that from a connected client and a per-sample ground
truth record.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

from .client import RewardClient


def make_rollout_scoring_hook(
    client: RewardClient,
    use_advantages: bool = True,
) -> Callable[[Mapping[str, object], Sequence[str]], list[float]]:
    """Return a hook(ground_truth, completions) -> per-completion scalars.

    With ``use_advantages`` the hook returns the service's group-relative
    advantages (falling back to raw totals for single-completion groups);
    otherwise it always returns raw reward totals.
    """

    def hook(ground_truth: Mapping[str, object], completions: Sequence[str]) -> list[float]:
        result = client.score_group(ground_truth, completions)
        if use_advantages and result.advantages is not None:
            return list(result.advantages)
        return list(result.totals)

    return hook
