"""Desk-scale GRPO loop over a toy softmax policy.

The policy picks, per question, an answer option and a completion template;
templates differ in block structure, step indicators, spatial-term coverage,
and length, so the reward suite meaningfully discriminates them. Every sampled
completion is scored by the reward engine (via a precomputed table over the
finite completion space), advantages are group-normalized per question, and
the policy gradient optionally carries the KL estimator against the frozen
initial policy. No neural network anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qa import QARecord
from .rewards import PRESETS, RewardWeights, score_completion

# Completion templates ordered by increasing structure. {answer} is the label.
TEMPLATES: tuple[str, ...] = (
    "The answer is {answer}.",
    "<think>\nCompare the candidates directly.\n</think>\n<answer>\n{answer}\n</answer>",
    (
        "<think>\nFirst, look at the scene. Next, compare the two candidates. "
        "Finally, settle on the better one.\n</think>\n<answer>\n{answer}\n</answer>"
    ),
    (
        "<think>\nFirst, note where each object is located in 3D. Next, compute "
        "the distance between them and the angle between their facing directions. "
        "Finally, compare the height values and decide.\n</think>\n"
        "<answer>\n{answer}\n</answer>"
    ),
)

LABELS = ("A", "B", "C", "D")


class SimulationError(ValueError):
    """Invalid simulator configuration."""


@dataclass(frozen=True)
class SimConfig:
    bank: tuple[QARecord, ...]
    group_size: int = 8
    steps: int = 400
    learning_rate: float = 0.3
    reward_preset: str = "final"
    kl_weight: float = 0.0
    seed: int = 0
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if not self.bank:
            raise SimulationError("question bank must be nonempty")
        if self.group_size < 2:
            raise SimulationError("group_size must be >= 2")
        if self.steps < 1:
            raise SimulationError("steps must be >= 1")
        if self.learning_rate < 0:
            raise SimulationError("learning_rate must be >= 0")
        if self.reward_preset not in PRESETS:
            raise SimulationError(f"unknown reward preset {self.reward_preset!r}")
        if self.kl_weight < 0:
            raise SimulationError("kl_weight must be >= 0")
        if self.temperature <= 0:
            raise SimulationError("temperature must be positive")


@dataclass(frozen=True)
class SimReport:
    accuracy_curve: tuple[float, ...]
    length_curve: tuple[float, ...]
    final_accuracy: float


@dataclass
class ToyPolicy:
    """Independent softmax heads per question: answer choice and template choice."""

    answer_logits: np.ndarray   # (Q, 4), -inf where the question has no such option
    template_logits: np.ndarray  # (Q, T)
    temperature: float = 1.0

    @classmethod
    def uniform(cls, bank: Sequence[QARecord], temperature: float = 1.0) -> "ToyPolicy":
        q = len(bank)
        answer_logits = np.full((q, len(LABELS)), -np.inf)
        for i, record in enumerate(bank):
            answer_logits[i, : len(record.options)] = 0.0
        template_logits = np.zeros((q, len(TEMPLATES)))
        return cls(answer_logits=answer_logits, template_logits=template_logits,
                   temperature=temperature)

    def _probs(self, logits: np.ndarray) -> np.ndarray:
        z = logits / self.temperature
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def answer_probs(self) -> np.ndarray:
        return self._probs(self.answer_logits)

    def template_probs(self) -> np.ndarray:
        return self._probs(self.template_logits)


def _sample(probs: np.ndarray, g: int, rng: np.random.Generator) -> np.ndarray:
    """Sample g categorical draws per row; returns (rows, g) int indices."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], g))
    return (u[:, :, None] > cum[:, None, :]).sum(axis=2)


def _reward_tables(bank: Sequence[QARecord], weights: RewardWeights):
    """Score the finite completion space (question x template x answer) once
    with the reward engine; the loop then just looks rewards up."""
    q, t, a = len(bank), len(TEMPLATES), len(LABELS)
    composite = np.zeros((q, t, a))
    lengths = np.zeros((t, a))
    for ti, template in enumerate(TEMPLATES):
        for ai, label in enumerate(LABELS):
            text = template.format(answer=label)
            lengths[ti, ai] = len(text)
            for qi, record in enumerate(bank):
                if ai >= len(record.options):
                    continue
                breakdown = score_completion(text, record, weights)
                composite[qi, ti, ai] = breakdown.composite
    return composite, lengths


def _group_advantages(rewards: np.ndarray, epsilon: float = 1e-8) -> np.ndarray:
    """Row-wise GRPO normalization; all-equal rows come out exactly zero."""
    mean = rewards.mean(axis=1, keepdims=True)
    std = rewards.std(axis=1, keepdims=True)
    centered = rewards - mean
    out = centered / np.maximum(std, epsilon)
    out[np.broadcast_to(std == 0.0, out.shape)] = 0.0
    return out


def run_simulation(cfg: SimConfig) -> SimReport:
    """Full-bank GRPO updates for cfg.steps steps; deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    weights = PRESETS[cfg.reward_preset]
    policy = ToyPolicy.uniform(cfg.bank, cfg.temperature)
    reference = ToyPolicy(
        answer_logits=policy.answer_logits.copy(),
        template_logits=policy.template_logits.copy(),
        temperature=cfg.temperature,
    )
    composite, lengths = _reward_tables(cfg.bank, weights)
    correct_idx = np.array([LABELS.index(r.answer) for r in cfg.bank])

    q = len(cfg.bank)
    rows = np.repeat(np.arange(q), cfg.group_size)
    accuracy_curve: list[float] = []
    length_curve: list[float] = []

    for _ in range(cfg.steps):
        p_ans = policy.answer_probs()
        p_tmpl = policy.template_probs()
        a_idx = _sample(p_ans, cfg.group_size, rng)      # (Q, G)
        t_idx = _sample(p_tmpl, cfg.group_size, rng)     # (Q, G)

        rewards = composite[np.arange(q)[:, None], t_idx, a_idx]
        advantages = _group_advantages(rewards)

        # Curves report expectations under the current policy: deterministic,
        # and exactly constant when the learning rate is zero.
        accuracy_curve.append(float(p_ans[np.arange(q), correct_idx].mean()))
        length_curve.append(float(np.einsum("qt,ta,qa->", p_tmpl, lengths, p_ans) / q))

        coeff = advantages
        if cfg.kl_weight > 0.0:
            ref_ans = reference.answer_probs()
            ref_tmpl = reference.template_probs()
            lp_cur = (
                np.log(p_ans[np.arange(q)[:, None], a_idx])
                + np.log(p_tmpl[np.arange(q)[:, None], t_idx])
            )
            lp_ref = (
                np.log(ref_ans[np.arange(q)[:, None], a_idx])
                + np.log(ref_tmpl[np.arange(q)[:, None], t_idx])
            )
            ratio = np.exp(lp_ref - lp_cur)
            coeff = advantages - cfg.kl_weight * (1.0 - ratio)

        flat_coeff = coeff.ravel()
        scale = cfg.learning_rate / (cfg.group_size * cfg.temperature)

        grad_ans = np.zeros_like(p_ans)
        np.add.at(grad_ans, (rows, a_idx.ravel()), flat_coeff)
        grad_ans -= p_ans * coeff.sum(axis=1, keepdims=True)
        finite = np.isfinite(policy.answer_logits)
        policy.answer_logits[finite] += scale * grad_ans[finite]

        grad_tmpl = np.zeros_like(p_tmpl)
        np.add.at(grad_tmpl, (rows, t_idx.ravel()), flat_coeff)
        grad_tmpl -= p_tmpl * coeff.sum(axis=1, keepdims=True)
        policy.template_logits += scale * grad_tmpl

    final_accuracy = float(policy.answer_probs()[np.arange(q), correct_idx].mean())
    return SimReport(
        accuracy_curve=tuple(accuracy_curve),
        length_curve=tuple(length_curve),
        final_accuracy=final_accuracy,
    )


def report_to_tsv(report: SimReport) -> str:
    lines = ["step\ttrain_accuracy\tmean_completion_length"]
    for i, (acc, length) in enumerate(zip(report.accuracy_curve, report.length_curve)):
        lines.append(f"{i}\t{acc:.6f}\t{length:.2f}")
    lines.append(f"# final_accuracy\t{report.final_accuracy:.6f}")
    return "\n".join(lines) + "\n"
