"""Decoding strategies over a masked language model.

Every strategy multiplies the model distribution by the engine mask before
selecting, so no decoder ever advances on a denied token; with the full
budget-aware mask this makes any output complete and within budget by
construction.  All strategies are deterministic: ties break toward the
lowest token id (greedy, beam) or the highest prior (tree search at zero
visits), so fixed model + fixed seed reproduces identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from boundedgen.engine import EngineState
from boundedgen.models import LanguageModel

_VALUE_FLOOR = 1e-12  # keeps rollout values strictly positive


@dataclass(frozen=True)
class MctsConfig:
    """Search hyperparameters: exploration weight, prior temperature, trials."""

    c_puct: float = 5.0
    temperature: float = 2.0
    trials: int = 20

    def __post_init__(self):
        if self.c_puct < 0:
            raise ValueError("c_puct must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")


def softmax_prior(probs: np.ndarray, mask: np.ndarray, temperature: float) -> np.ndarray:
    """Temperature softmax of log-probabilities over admitted tokens.

    Denied tokens get zero.  If every admitted token has zero model mass the
    prior is uniform over the admitted set.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask admits no token")
    out = np.zeros(len(probs))
    selected = np.asarray(probs, dtype=float)[mask]
    if selected.max() <= 0.0:
        out[mask] = 1.0 / mask.sum()
        return out
    with np.errstate(divide="ignore"):
        logs = np.log(selected) / temperature
    logs -= logs.max()
    weights = np.exp(logs)
    out[mask] = weights / weights.sum()
    return out


def _masked_argmax(probs: np.ndarray, mask: np.ndarray) -> int:
    """Highest-probability admitted token; lowest id on ties or zero mass."""
    admitted = np.flatnonzero(mask)
    best = admitted[np.argmax(probs[admitted])]
    return int(best)


def _budget_reached(state: EngineState) -> bool:
    return state.consumed >= state.budget


def greedy_decode(
    model: LanguageModel, session: EngineState, prompt: tuple[int, ...] = ()
) -> list[int]:
    """Pick the argmax of model-probability times mask until eos.

    Prompt tokens condition the model but never count against the budget.
    Under the full mask the result is always complete; under a grammar-only
    mask the loop can instead run out of budget and return a truncated
    sequence without eos.
    """
    engine = session.engine
    eos = engine.vocab.eos
    state = session
    out: list[int] = []
    while not _budget_reached(state):
        mask = engine.compute_mask(state)
        probs = model.next_distribution(tuple(prompt) + tuple(out))
        token = _masked_argmax(probs, mask)
        out.append(token)
        state = engine.advance(state, token, mask)
        if token == eos:
            break
    return out


def unconstrained_greedy(
    model: LanguageModel, eos: int, budget: int, prompt: tuple[int, ...] = ()
) -> list[int]:
    """Raw argmax decoding with no mask: stops at eos or at the budget."""
    out: list[int] = []
    while len(out) < budget:
        probs = model.next_distribution(tuple(prompt) + tuple(out))
        token = int(np.argmax(probs))
        out.append(token)
        if token == eos:
            break
    return out


@dataclass
class _Hypothesis:
    ids: tuple[int, ...]
    state: EngineState
    log_sum: float

    def score(self) -> float:
        return self.log_sum / max(len(self.ids), 1)


def beam_search(
    model: LanguageModel,
    session: EngineState,
    prompt: tuple[int, ...] = (),
    beams: int = 10,
) -> list[int]:
    """Length-normalized beam search over masked, renormalized probabilities.

    Each hypothesis carries its own forked engine state.  The top ``beams``
    continuations survive each step; those ending in eos retire to a pool
    and the best finished hypothesis wins.  With ``beams=1`` the selection
    rule coincides with greedy decoding, including tie-breaking.
    """
    if beams < 1:
        raise ValueError("beams must be at least 1")
    engine = session.engine
    eos = engine.vocab.eos
    live: list[_Hypothesis] = [_Hypothesis((), session, 0.0)]
    finished: list[_Hypothesis] = []
    while live:
        candidates: list[tuple[float, tuple[int, ...], _Hypothesis, int, np.ndarray]] = []
        for hyp in live:
            if _budget_reached(hyp.state):
                continue
            mask = engine.compute_mask(hyp.state)
            probs = model.next_distribution(tuple(prompt) + hyp.ids)
            masked = np.where(mask, probs, 0.0)
            total = masked.sum()
            if total <= 0.0:
                masked = mask.astype(float)
                total = masked.sum()
            with np.errstate(divide="ignore"):
                logs = np.log(masked / total)
            for token in np.flatnonzero(mask):
                token = int(token)
                ids = hyp.ids + (token,)
                score = (hyp.log_sum + logs[token]) / len(ids)
                candidates.append((score, ids, hyp, token, mask))
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for score, ids, hyp, token, mask in candidates[:beams]:
            log_sum = score * len(ids)
            if token == eos:
                finished.append(_Hypothesis(ids, hyp.state, log_sum))
            else:
                live.append(
                    _Hypothesis(ids, engine.advance(hyp.state, token, mask), log_sum)
                )
    if finished:
        finished.sort(key=lambda h: (-h.score(), h.ids))
        return list(finished[0].ids)
    # Only reachable without budget-aware masking: every beam truncated.
    best_live = max(live, default=None, key=lambda h: h.score()) if live else None
    if best_live is None:
        raise RuntimeError("beam search produced no hypothesis")
    return list(best_live.ids)


class _SearchNode:
    __slots__ = ("state", "probs", "mask", "priors", "visits", "values", "children", "terminal")

    def __init__(self, state: EngineState, probs: np.ndarray, mask: np.ndarray, priors: np.ndarray):
        self.state = state
        self.probs = probs
        self.mask = mask
        self.priors = priors
        self.visits = np.zeros(len(priors), dtype=np.int64)
        self.values = np.zeros(len(priors))  # max rollout value seen per edge
        self.children: dict[int, "_SearchNode" | None] = {}
        self.terminal = False


def _make_terminal_node() -> _SearchNode:
    node = _SearchNode.__new__(_SearchNode)
    node.state = None
    node.probs = None
    node.mask = None
    node.priors = None
    node.visits = None
    node.values = None
    node.children = {}
    node.terminal = True
    return node


def mcts_decode(
    model: LanguageModel,
    session: EngineState,
    prompt: tuple[int, ...] = (),
    config: MctsConfig = MctsConfig(),
    stats: dict | None = None,
) -> list[int]:
    """Tree search with prior-weighted upper-confidence selection.

    Per emitted token: run ``config.trials`` simulations, each descending by
    argmax of ``Q + c_puct * prior * sqrt(sum(N)) / (1 + N)``, expanding one
    child, rolling out greedily under the mask, and backing the rollout value
    (geometric mean of unmodified model probabilities over the whole
    generated sequence) up as a maximum.  The argmax-Q child is committed and
    its subtree reused.  At zero visits the selection term vanishes, so ties
    break toward the highest prior: the first simulation is exactly the
    greedy rollout.
    """
    engine = session.engine
    eos = engine.vocab.eos

    def expand(state: EngineState, generated: tuple[int, ...]) -> _SearchNode:
        mask = engine.compute_mask(state)
        probs = model.next_distribution(tuple(prompt) + generated)
        priors = softmax_prior(probs, mask, config.temperature)
        return _SearchNode(state, probs, mask, priors)

    def rollout_value(log_parts: list[float], count: int) -> float:
        if count == 0:
            return _VALUE_FLOOR
        return math.exp(sum(log_parts) / count)

    def greedy_rollout(state: EngineState, generated: tuple[int, ...], logs: list[float]) -> float:
        """Greedy completion from ``state``; returns the full-sequence value."""
        local_logs = list(logs)
        count = len(generated)
        while not _budget_reached(state):
            mask = engine.compute_mask(state)
            probs = model.next_distribution(tuple(prompt) + generated)
            token = _masked_argmax(probs, mask)
            local_logs.append(math.log(max(float(probs[token]), _VALUE_FLOOR)))
            generated = generated + (token,)
            count += 1
            state = engine.advance(state, token, mask)
            if token == eos:
                break
        return rollout_value(local_logs, count)

    committed: list[int] = []
    committed_logs: list[float] = []
    trials_per_step: list[int] = []
    if stats is not None:
        stats["trials_per_step"] = trials_per_step
    root = expand(session, ())

    while True:
        trials_per_step.append(0)
        for _ in range(config.trials):
            trials_per_step[-1] += 1
            node = root
            path: list[tuple[_SearchNode, int]] = []
            generated = tuple(committed)
            logs = list(committed_logs)
            value: float | None = None
            while True:
                if node.terminal:
                    value = rollout_value(logs, len(generated))
                    break
                totals = node.visits.sum()
                scores = np.where(node.mask, node.values, -np.inf)
                if config.c_puct > 0:
                    bonus = (
                        config.c_puct
                        * node.priors
                        * (math.sqrt(totals) / (1.0 + node.visits))
                    )
                    scores = np.where(node.mask, scores + bonus, -np.inf)
                if totals == 0:
                    scores = np.where(node.mask, node.priors, -np.inf)
                token = int(np.argmax(scores))
                path.append((node, token))
                logs.append(math.log(max(float(node.probs[token]), _VALUE_FLOOR)))
                generated = generated + (token,)
                child = node.children.get(token)
                if child is None:
                    if token == eos:
                        node.children[token] = _make_terminal_node()
                        value = rollout_value(logs, len(generated))
                    else:
                        next_state = engine.advance(node.state, token, node.mask)
                        if _budget_reached(next_state):
                            # Only possible without the budget term in the
                            # mask: the branch truncated, score it as-is.
                            node.children[token] = _make_terminal_node()
                            value = rollout_value(logs, len(generated))
                        else:
                            node.children[token] = expand(next_state, generated)
                            value = greedy_rollout(next_state, generated, logs)
                    break
                node = child
            assert value is not None
            for parent, token in path:
                parent.visits[token] += 1
                parent.values[token] = max(parent.values[token], value)

        visited = np.flatnonzero(root.visits > 0)
        if visited.size == 0:
            token = int(np.argmax(np.where(root.mask, root.priors, -np.inf)))
        else:
            best = visited[np.argmax(root.values[visited])]
            token = int(best)
        committed.append(token)
        committed_logs.append(math.log(max(float(root.probs[token]), _VALUE_FLOOR)))
        if token == eos:
            break
        child = root.children.get(token)
        if child is None or child.terminal:
            next_state = engine.advance(root.state, token, root.mask)
            if _budget_reached(next_state):
                break
            child = expand(next_state, tuple(committed))
        root = child
        if root.terminal:
            break
    return committed
