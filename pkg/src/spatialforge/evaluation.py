"""Benchmark evaluation with permutation-robust scoring and a 2D-shortcut
baseline.

A question counts as correct only when the adapter picks the ground-truth
option under every seeded option order. Adapters are external commands (one
prompt on stdin, completion on stdout) or any Python callable; recorded
completions can be re-scored offline and reproduce the live report exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .traces import extract_answer

LABELS = ("A", "B", "C", "D")

# Canonical category column order for report tables; unknown categories follow
# alphabetically.
CANONICAL_CATEGORIES = ("height", "location", "orientation", "multi_object")

PARALLELISM_ENV = "FORGE_PARALLELISM"


class BenchFormatError(ValueError):
    """Malformed bench or predictions file."""


class HeuristicNotApplicableError(ValueError):
    """The 2D-center heuristic needs anchor and candidate boxes."""


@dataclass(frozen=True)
class BenchQuestion:
    question_id: str
    image_path: str
    question_text: str
    options: tuple[tuple[str, str], ...]
    answer: str
    category: str
    boxes: Mapping[str, tuple[float, float, float, float]] | None = None

    def __post_init__(self) -> None:
        labels = [label for label, _ in self.options]
        if labels != list(LABELS[: len(labels)]) or not 2 <= len(labels) <= 4:
            raise BenchFormatError(f"options must be labeled A.. in order, got {labels}")
        if self.answer not in labels:
            raise BenchFormatError(f"answer {self.answer!r} not among options")

    def option_text(self, label: str) -> str:
        return dict(self.options)[label]


@dataclass(frozen=True)
class QuestionOutcome:
    question_id: str
    category: str
    correct: bool
    permutation_consistent: bool
    chosen: tuple[str | None, ...]  # original-label choice per permutation


@dataclass(frozen=True)
class EvalReport:
    overall_accuracy: float
    per_category: dict[str, tuple[int, float]]  # category -> (count, accuracy)
    outcomes: tuple[QuestionOutcome, ...]
    permutations: int


def load_bench(path: str | Path) -> list[BenchQuestion]:
    questions: list[BenchQuestion] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                boxes = raw.get("boxes")
                question = BenchQuestion(
                    question_id=raw["question_id"],
                    image_path=raw.get("image_path", ""),
                    question_text=raw["question_text"],
                    options=tuple(sorted(raw["options"].items())),
                    answer=raw["answer"],
                    category=raw.get("category", "uncategorized"),
                    boxes={k: tuple(v) for k, v in boxes.items()} if boxes else None,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise BenchFormatError(f"line {line_number}: {exc}") from exc
            if question.question_id in seen:
                raise BenchFormatError(f"line {line_number}: duplicate question_id")
            seen.add(question.question_id)
            questions.append(question)
    return questions


def _permutation(question_id: str, index: int, n: int) -> list[int]:
    """Seeded option order for one (question, permutation) pair.

    Index 0 is the identity; later indices derive from a stable digest so the
    order never depends on the question's position in the file.
    """
    order = list(range(n))
    if index > 0:
        digest = hashlib.sha256(f"{question_id}:{index}".encode()).digest()
        random.Random(int.from_bytes(digest[:8], "big")).shuffle(order)
    return order


def render_prompt(question: BenchQuestion, order: Sequence[int]) -> str:
    lines = [f"Question: {question.question_text}"]
    for new_pos, original_index in enumerate(order):
        lines.append(f"{LABELS[new_pos]}. {question.options[original_index][1]}")
    lines.append("Answer with the letter of the correct option.")
    return "\n".join(lines)


Adapter = Callable[[str], str]


def command_adapter(command: str) -> Adapter:
    """Run a shell command per question: prompt on stdin, completion on stdout."""

    def run(prompt: str) -> str:
        proc = subprocess.run(
            command, shell=True, input=prompt, capture_output=True, text=True,
            timeout=120,
        )
        if proc.returncode != 0:
            raise RuntimeError(f"adapter exited {proc.returncode}: {proc.stderr[:200]}")
        return proc.stdout

    return run


def _score_completions(
    questions: Sequence[BenchQuestion],
    completions: Mapping[tuple[str, int], str | None],
    permutations: int,
) -> EvalReport:
    """Shared scoring core for live runs and recorded predictions."""
    outcomes: list[QuestionOutcome] = []
    for question in questions:
        chosen: list[str | None] = []
        for k in range(permutations):
            order = _permutation(question.question_id, k, len(question.options))
            completion = completions.get((question.question_id, k))
            if completion is None:
                chosen.append(None)
                continue
            permuted_options = {
                LABELS[new_pos]: question.options[original_index][1]
                for new_pos, original_index in enumerate(order)
            }
            label = extract_answer(completion, permuted_options)
            if label is None or label not in permuted_options:
                chosen.append(None)
            else:
                original_index = order[LABELS.index(label)]
                chosen.append(question.options[original_index][0])
        answered = [c for c in chosen if c is not None]
        consistent = len(answered) == len(chosen) and len(set(answered)) == 1
        correct = consistent and answered[0] == question.answer
        outcomes.append(QuestionOutcome(
            question_id=question.question_id,
            category=question.category,
            correct=correct,
            permutation_consistent=consistent,
            chosen=tuple(chosen),
        ))
    per_category: dict[str, tuple[int, float]] = {}
    for category in sorted({o.category for o in outcomes}):
        members = [o for o in outcomes if o.category == category]
        per_category[category] = (
            len(members),
            sum(o.correct for o in members) / len(members),
        )
    overall = sum(o.correct for o in outcomes) / len(outcomes) if outcomes else 0.0
    return EvalReport(
        overall_accuracy=overall,
        per_category=per_category,
        outcomes=tuple(outcomes),
        permutations=permutations,
    )


def run_eval(
    questions: Sequence[BenchQuestion],
    adapter: Adapter,
    permutations: int = 2,
    record_to: str | Path | None = None,
) -> EvalReport:
    """Ask every question under each seeded option order and score strictly.

    Adapter failures score as abstentions and the run continues. With
    record_to, completions are written as a predictions file that
    score_predictions will reproduce this report from, bit-exactly.
    """
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    jobs = []
    for question in questions:
        for k in range(permutations):
            order = _permutation(question.question_id, k, len(question.options))
            jobs.append((question.question_id, k, render_prompt(question, order)))

    max_workers = max(1, int(os.environ.get(PARALLELISM_ENV, "1")))

    def ask(job):
        question_id, k, prompt = job
        try:
            return question_id, k, adapter(prompt)
        except Exception:
            return question_id, k, None

    if max_workers == 1:
        results = [ask(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(ask, jobs))

    completions = {(question_id, k): text for question_id, k, text in results}
    if record_to is not None:
        with open(record_to, "w", encoding="utf-8") as fh:
            for (question_id, k) in sorted(completions):
                text = completions[(question_id, k)]
                if text is None:
                    continue
                fh.write(json.dumps({
                    "question_id": question_id, "permutation": k, "completion": text,
                }) + "\n")
    return _score_completions(questions, completions, permutations)


def load_predictions(path: str | Path) -> dict[tuple[str, int], str]:
    predictions: dict[tuple[str, int], str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            key = (raw["question_id"], int(raw.get("permutation", 0)))
            if key in predictions:
                raise BenchFormatError(
                    f"line {line_number}: duplicate prediction for {key}"
                )
            predictions[key] = raw["completion"]
    return predictions


def score_predictions(
    questions: Sequence[BenchQuestion],
    predictions: Mapping[tuple[str, int], str],
    permutations: int = 2,
) -> EvalReport:
    """Offline scoring of recorded completions; missing entries are abstentions."""
    return _score_completions(questions, predictions, permutations)


def bbox_center_heuristic(question: BenchQuestion) -> str:
    """Answer a closer-to question from 2D bbox centers alone.

    Picks the candidate option whose box center is nearest the anchor's box
    center in pixel L2 distance; ties go to the first-listed option.
    """
    if not question.boxes or "anchor" not in question.boxes:
        raise HeuristicNotApplicableError(
            f"question {question.question_id!r} lacks anchor/candidate boxes"
        )

    def center(box: tuple[float, float, float, float]) -> tuple[float, float]:
        x_min, y_min, x_max, y_max = box
        return ((x_min + x_max) / 2.0, (y_min + y_max) / 2.0)

    ax, ay = center(question.boxes["anchor"])
    best_label: str | None = None
    best_distance = math.inf
    for label, _ in question.options:
        if label not in question.boxes:
            continue
        cx, cy = center(question.boxes[label])
        d = math.hypot(cx - ax, cy - ay)
        if d < best_distance:  # strict: ties keep the earlier option
            best_distance = d
            best_label = label
    if best_label is None:
        raise HeuristicNotApplicableError(
            f"question {question.question_id!r} has no candidate boxes"
        )
    return best_label


def run_baseline_2d(questions: Sequence[BenchQuestion]) -> EvalReport:
    """Score the bbox-center heuristic; questions without boxes are abstentions."""
    outcomes = []
    for question in questions:
        try:
            label = bbox_center_heuristic(question)
            correct = label == question.answer
            chosen: tuple[str | None, ...] = (label,)
        except HeuristicNotApplicableError:
            correct = False
            chosen = (None,)
        outcomes.append(QuestionOutcome(
            question_id=question.question_id, category=question.category,
            correct=correct, permutation_consistent=chosen[0] is not None,
            chosen=chosen,
        ))
    per_category = {}
    for category in sorted({o.category for o in outcomes}):
        members = [o for o in outcomes if o.category == category]
        per_category[category] = (len(members), sum(o.correct for o in members) / len(members))
    overall = sum(o.correct for o in outcomes) / len(outcomes) if outcomes else 0.0
    return EvalReport(
        overall_accuracy=overall, per_category=per_category,
        outcomes=tuple(outcomes), permutations=1,
    )


def emit_report(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Write summary, per-question outcomes, and the category table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    summary = out / "summary.tsv"
    lines = ["metric\tvalue", f"overall_accuracy\t{report.overall_accuracy:.6f}",
             f"questions\t{len(report.outcomes)}",
             f"permutations\t{report.permutations}"]
    for category, (count, accuracy) in sorted(report.per_category.items()):
        lines.append(f"category_{category}\t{count}\t{accuracy:.6f}")
    summary.write_text("\n".join(lines) + "\n")
    written.append(summary)

    per_question = out / "per_question.tsv"
    lines = ["question_id\tcategory\tcorrect\tconsistent\tchosen"]
    for o in report.outcomes:
        chosen = ",".join(c or "-" for c in o.chosen)
        lines.append(f"{o.question_id}\t{o.category}\t{int(o.correct)}\t"
                     f"{int(o.permutation_consistent)}\t{chosen}")
    per_question.write_text("\n".join(lines) + "\n")
    written.append(per_question)

    categories = [c for c in CANONICAL_CATEGORIES if c in report.per_category]
    categories += sorted(c for c in report.per_category if c not in CANONICAL_CATEGORIES)
    table = out / "category_table.tsv"
    header = "Mean\t" + "\t".join(categories)
    row = f"{100 * report.overall_accuracy:.1f}"
    for category in categories:
        count, accuracy = report.per_category[category]
        row += f"\t{100 * accuracy:.1f}" if count else "\t-"
    table.write_text(header + "\n" + row + "\n")
    written.append(table)
    return written


def save_bench(questions: Iterable[BenchQuestion], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for question in questions:
            raw = {
                "question_id": question.question_id,
                "image_path": question.image_path,
                "question_text": question.question_text,
                "options": {label: text for label, text in question.options},
                "answer": question.answer,
                "category": question.category,
            }
            if question.boxes:
                raw["boxes"] = {k: list(v) for k, v in question.boxes.items()}
            fh.write(json.dumps(raw) + "\n")
            count += 1
    return count
