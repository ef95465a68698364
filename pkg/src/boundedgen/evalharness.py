"""Desk-scale evaluation: run tasks through strategies and budget policies.

A task file is JSON lines, one object per task::

    {"id": "t0", "prompt": "", "ground_truth": "{\\"a\\":1}", "l_gt": 7}

``l_gt`` is the ground-truth length in tokens under the vocabulary the run
loads; a ratio budget policy turns it into ``floor(l_gt * e)`` per task.
Reports carry per-cell records plus aggregate percentages; the CSV and
JSON-lines forms contain no timing so fixed inputs reproduce byte-identical
files.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

from boundedgen.costs import CostTables
from boundedgen.decoding import (
    MctsConfig,
    beam_search,
    greedy_decode,
    mcts_decode,
    unconstrained_greedy,
)
from boundedgen.engine import BudgetError, MODE_FULL, MODE_GRAMMAR_ONLY, MaskEngine
from boundedgen.grammar import Grammar
from boundedgen.jsonval import json_equal
from boundedgen.models import LanguageModel
from boundedgen.vocab import Vocabulary

MODE_NONE = "none"


class TaskFileError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    task_id: str
    prompt: str
    ground_truth: str
    l_gt: int


@dataclass(frozen=True)
class BudgetPolicy:
    """Fixed budget, or per-task ``floor(l_gt * ratio)``."""

    kind: str  # "fixed" | "ratio"
    value: float

    def __post_init__(self):
        if self.kind not in ("fixed", "ratio"):
            raise ValueError(f"unknown budget policy {self.kind!r}")
        if self.kind == "fixed" and (self.value < 1 or self.value != int(self.value)):
            raise ValueError("fixed budget must be a positive integer")
        if self.kind == "ratio" and self.value < 1.0:
            raise ValueError("expansion ratio must be at least 1.0")

    def budget_for(self, l_gt: int) -> int:
        if self.kind == "fixed":
            return int(self.value)
        return max(int(l_gt * self.value), 1)

    def label(self) -> str:
        if self.kind == "fixed":
            return f"budget={int(self.value)}"
        return f"e={self.value:g}"

    @classmethod
    def fixed(cls, budget: int) -> "BudgetPolicy":
        return cls("fixed", budget)

    @classmethod
    def ratio(cls, expansion: float) -> "BudgetPolicy":
        return cls("ratio", expansion)


def load_tasks(path) -> list[Task]:
    tasks: list[Task] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TaskFileError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            try:
                tasks.append(
                    Task(
                        task_id=str(obj["id"]),
                        prompt=str(obj.get("prompt", "")),
                        ground_truth=str(obj["ground_truth"]),
                        l_gt=int(obj["l_gt"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise TaskFileError(f"{path}:{lineno}: bad task record: {exc}") from exc
    if not tasks:
        raise TaskFileError(f"{path}: no tasks found")
    return tasks


def save_tasks(tasks, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(
                json.dumps(
                    {
                        "id": task.task_id,
                        "prompt": task.prompt,
                        "ground_truth": task.ground_truth,
                        "l_gt": task.l_gt,
                    },
                    ensure_ascii=True,
                )
            )
            fh.write("\n")


def parse_strategy(spec: str):
    """Strategy spec -> (label, decode function taking (model, session, prompt)).

    Forms: ``greedy``, ``beam:<width>``, ``mcts:<trials>,<c_puct>,<tau>``
    (later mcts fields optional).
    """
    name, _, arg = spec.partition(":")
    if name == "greedy":
        return "greedy", greedy_decode
    if name == "beam":
        width = int(arg) if arg else 10
        return f"beam:{width}", lambda m, s, p=(): beam_search(m, s, p, beams=width)
    if name == "mcts":
        parts = [p for p in arg.split(",") if p] if arg else []
        trials = int(parts[0]) if len(parts) > 0 else 20
        c_puct = float(parts[1]) if len(parts) > 1 else 5.0
        tau = float(parts[2]) if len(parts) > 2 else 2.0
        config = MctsConfig(c_puct=c_puct, temperature=tau, trials=trials)
        label = f"mcts:{trials},{c_puct:g},{tau:g}"
        return label, lambda m, s, p=(): mcts_decode(m, s, p, config=config)
    raise ValueError(f"unknown strategy {spec!r}")


@dataclass(frozen=True)
class EvalRecord:
    task_id: str
    strategy: str
    policy: str
    budget: int
    tokens: int
    complete: bool
    exact: bool
    output: str


@dataclass
class EvalReport:
    records: list[EvalRecord]
    mean_ms_per_token: float = field(default=0.0, compare=False)

    def aggregates(self) -> dict[tuple[str, str], dict[str, float]]:
        """Per (strategy, policy): task count, syntax %, exact-match %."""
        groups: dict[tuple[str, str], list[EvalRecord]] = {}
        for rec in self.records:
            groups.setdefault((rec.strategy, rec.policy), []).append(rec)
        out = {}
        for key, recs in sorted(groups.items()):
            n = len(recs)
            out[key] = {
                "tasks": n,
                "syntax_pct": 100.0 * sum(r.complete for r in recs) / n,
                "exact_match_pct": 100.0 * sum(r.exact for r in recs) / n,
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["task_id", "strategy", "policy", "budget", "tokens", "complete", "exact", "output"]
        )
        for r in self.records:
            writer.writerow(
                [
                    r.task_id,
                    r.strategy,
                    r.policy,
                    r.budget,
                    r.tokens,
                    int(r.complete),
                    int(r.exact),
                    r.output,
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None:
            raise ValueError("empty CSV report")
        records = [
            EvalRecord(
                task_id=row[0],
                strategy=row[1],
                policy=row[2],
                budget=int(row[3]),
                tokens=int(row[4]),
                complete=bool(int(row[5])),
                exact=bool(int(row[6])),
                output=row[7],
            )
            for row in reader
        ]
        return cls(records=records)

    def to_json_lines(self) -> str:
        lines = []
        for r in self.records:
            lines.append(
                json.dumps(
                    {
                        "task_id": r.task_id,
                        "strategy": r.strategy,
                        "policy": r.policy,
                        "budget": r.budget,
                        "tokens": r.tokens,
                        "complete": r.complete,
                        "exact": r.exact,
                        "output": r.output,
                    },
                    ensure_ascii=True,
                )
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = ["strategy          policy        tasks  syntax%  exact%"]
        for (strategy, policy), agg in self.aggregates().items():
            lines.append(
                f"{strategy:<17} {policy:<13} {agg['tasks']:>5}  "
                f"{agg['syntax_pct']:>6.1f}  {agg['exact_match_pct']:>6.1f}"
            )
        if self.mean_ms_per_token:
            lines.append(f"mean per-token latency: {self.mean_ms_per_token:.3f} ms")
        return "\n".join(lines) + "\n"


def evaluate(
    grammar: Grammar,
    tables: CostTables,
    vocab: Vocabulary,
    model: LanguageModel,
    tasks: list[Task],
    strategies: list[str],
    policies: list[BudgetPolicy],
    mode: str = MODE_FULL,
) -> EvalReport:
    """Run every (task, strategy, policy) cell and assemble the report.

    ``mode`` selects masking: full (budget-aware), grammar-only (budget term
    disabled, generation truncates at the budget), or none (raw decoding,
    greedy only).  Grammatical validity is judged on the emitted bytes, so
    truncated-but-accidentally-complete outputs still count for Syntax.
    """
    checker = MaskEngine(grammar, tables, vocab, MODE_FULL)
    engine = (
        checker
        if mode == MODE_FULL
        else MaskEngine(grammar, tables, vocab, MODE_GRAMMAR_ONLY)
        if mode == MODE_GRAMMAR_ONLY
        else None
    )
    if mode == MODE_NONE and strategies != ["greedy"]:
        raise ValueError("unconstrained mode supports only the greedy strategy")
    records: list[EvalRecord] = []
    total_tokens = 0
    total_seconds = 0.0
    for strategy_spec in strategies:
        label, decode = parse_strategy(strategy_spec)
        for policy in policies:
            for task in tasks:
                budget = policy.budget_for(task.l_gt)
                prompt = tuple(vocab.tokenize(task.prompt.encode("utf-8")))
                started = time.perf_counter()
                if engine is None:
                    ids = unconstrained_greedy(model, vocab.eos, budget, prompt)
                else:
                    try:
                        session = engine.new_session(budget)
                        ids = decode(model, session, prompt)
                    except BudgetError:
                        ids = []
                total_seconds += time.perf_counter() - started
                total_tokens += len(ids)
                output_bytes = vocab.decode(ids)
                complete = checker.text_is_complete(output_bytes)
                output_text = output_bytes.decode("utf-8", errors="backslashreplace")
                exact = complete and json_equal(output_text, task.ground_truth)
                records.append(
                    EvalRecord(
                        task_id=task.task_id,
                        strategy=label,
                        policy=policy.label(),
                        budget=budget,
                        tokens=len(ids),
                        complete=complete,
                        exact=exact,
                        output=output_text,
                    )
                )
    mean_ms = (1000.0 * total_seconds / total_tokens) if total_tokens else 0.0
    return EvalReport(records=records, mean_ms_per_token=mean_ms)
