"""Rule-based rewards over completion text plus GRPO group advantages.

Outcome rewards (accuracy, format) depend only on the final answer and the
block structure; process rewards (reasoning steps, 3D terms) inspect the
thinking text. All components are bounded and pure.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .qa import ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN, QARecord
from .traces import _THINK_RE, extract_answer

DEFAULT_INDICATORS = ("First", "Second", "Next", "Then", "Finally")
DEFAULT_INDICATOR_SATURATION = 3

# Required spatial terms per question category for the 3D process reward.
DEFAULT_REQUIRED_TERMS: dict[str, tuple[str, ...]] = {
    "height": ("height", "located"),
    "location": ("located", "distance"),
    "orientation": ("facing", "angle"),
    "multi_object": ("located", "distance"),
    "perception_location": ("located",),
    "perception_orientation": ("facing",),
    "computation_distance": ("distance",),
    "computation_angle": ("angle",),
}


def accuracy_reward(completion: str, record: QARecord) -> float:
    """1 iff the extracted answer equals the record's answer, else 0."""
    options = {label: text for label, text in record.options}
    return 1.0 if extract_answer(completion, options) == record.answer else 0.0


def format_reward(completion: str) -> float:
    """1 iff exactly one think block and one answer block appear, in order."""
    for tag in (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE):
        if completion.count(tag) != 1:
            return 0.0
    positions = [
        completion.find(THINK_OPEN),
        completion.find(THINK_CLOSE),
        completion.find(ANSWER_OPEN),
        completion.find(ANSWER_CLOSE),
    ]
    return 1.0 if positions == sorted(positions) and -1 not in positions else 0.0


def reasoning_steps_reward(
    completion: str,
    indicators: Sequence[str] = DEFAULT_INDICATORS,
    saturation: int = DEFAULT_INDICATOR_SATURATION,
) -> float:
    """min(1, k/K) where k counts distinct structure indicators present."""
    if saturation < 1:
        raise ValueError("saturation must be >= 1")
    k = 0
    for token in indicators:
        if re.search(rf"\b{re.escape(token)}\b", completion, re.IGNORECASE):
            k += 1
    return min(1.0, k / saturation)


def process_reward_3d(completion: str, required_terms: Sequence[str]) -> float:
    """Fraction of required spatial terms present in the thinking block.

    Whole-word, case-insensitive. Without a thinking block nothing counts.
    """
    terms = list(required_terms)
    if not terms:
        raise ValueError("required_terms must be nonempty")
    m = _THINK_RE.search(completion)
    thinking = m.group(1) if m else ""
    hits = sum(
        1 for term in terms
        if re.search(rf"\b{re.escape(term)}\b", thinking, re.IGNORECASE)
    )
    return hits / len(terms)


def process_reward_3d_all_or_nothing(completion: str, required_terms: Sequence[str]) -> float:
    """Strict variant: 1 only when every required term is present."""
    return 1.0 if process_reward_3d(completion, required_terms) == 1.0 else 0.0


@dataclass(frozen=True)
class RewardWeights:
    accuracy: float = 1.0
    format: float = 1.0
    reasoning_steps: float = 0.0
    process_3d: float = 0.0

    def __post_init__(self) -> None:
        for name in ("accuracy", "format", "reasoning_steps", "process_3d"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be nonnegative")


# The final model keeps only the outcome rewards; the RL-only ablations can
# switch the process rewards on.
PRESETS: dict[str, RewardWeights] = {
    "final": RewardWeights(),
    "zero": RewardWeights(),
    "zero-3drwd": RewardWeights(reasoning_steps=0.5, process_3d=0.5),
}


@dataclass(frozen=True)
class RewardBreakdown:
    accuracy: float
    format: float
    reasoning_steps: float
    process_3d: float
    composite: float
    weights: RewardWeights


def composite_reward(
    accuracy: float,
    fmt: float,
    reasoning_steps: float,
    process_3d: float,
    weights: RewardWeights = RewardWeights(),
) -> RewardBreakdown:
    """Weighted sum of the component rewards, echoing the weights used."""
    for name, value, hi in (
        ("accuracy", accuracy, 1.0),
        ("format", fmt, 1.0),
        ("reasoning_steps", reasoning_steps, 1.0),
        ("process_3d", process_3d, 1.0),
    ):
        if not 0.0 <= value <= hi:
            raise ValueError(f"component {name}={value} out of range [0, {hi}]")
    composite = (
        weights.accuracy * accuracy
        + weights.format * fmt
        + weights.reasoning_steps * reasoning_steps
        + weights.process_3d * process_3d
    )
    return RewardBreakdown(
        accuracy=accuracy, format=fmt, reasoning_steps=reasoning_steps,
        process_3d=process_3d, composite=composite, weights=weights,
    )


def score_completion(
    completion: str,
    record: QARecord,
    weights: RewardWeights = RewardWeights(),
    required_terms: Mapping[str, Sequence[str]] | None = None,
) -> RewardBreakdown:
    """All component rewards for one completion against its record."""
    terms_by_category = required_terms or DEFAULT_REQUIRED_TERMS
    terms = terms_by_category.get(record.category, ("distance",))
    return composite_reward(
        accuracy=accuracy_reward(completion, record),
        fmt=format_reward(completion),
        reasoning_steps=reasoning_steps_reward(completion),
        process_3d=process_reward_3d(completion, terms),
        weights=weights,
    )


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    kl_weight: float = 0.0
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be >= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class AdvantageGroup:
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]


def grpo_advantages(rewards: Sequence[float], cfg: GrpoConfig = GrpoConfig()) -> AdvantageGroup:
    """Group-relative advantages: (r - mean) / max(population_std, epsilon).

    All-equal groups come out exactly zero; otherwise the advantages sum to
    zero and are invariant to shifting or positively scaling the rewards.
    """
    rewards = tuple(float(r) for r in rewards)
    if len(rewards) != cfg.group_size:
        raise ValueError(f"expected {cfg.group_size} rewards, got {len(rewards)}")
    if all(r == rewards[0] for r in rewards):
        return AdvantageGroup(rewards=rewards, advantages=(0.0,) * len(rewards))
    mean = sum(rewards) / len(rewards)
    variance = sum((r - mean) ** 2 for r in rewards) / len(rewards)
    std = math.sqrt(variance)
    denom = max(std, cfg.epsilon)
    if denom == 0.0:
        advantages = tuple(0.0 for _ in rewards)
    else:
        advantages = tuple((r - mean) / denom for r in rewards)
    return AdvantageGroup(rewards=rewards, advantages=advantages)


def kl_penalty(logprob_current: float, logprob_reference: float, kl_weight: float) -> float:
    """Nonnegative per-token KL estimate: w * (e^d - d - 1), d = ref - current."""
    if not (math.isfinite(logprob_current) and math.isfinite(logprob_reference)):
        raise ValueError("log-probabilities must be finite")
    if kl_weight == 0.0:
        return 0.0
    d = logprob_reference - logprob_current
    return kl_weight * (math.exp(d) - d - 1.0)
