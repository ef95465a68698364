"""Per-session masking engine.

One :class:`EngineState` tracks a single generation: the committed terminal
sequence, the uncommitted remainder bytes with their live lexer states, the
LL(1) parser stack, and how many tokens have been consumed.  States are
immutable; ``advance`` returns a fresh state sharing structure with the old
one, so beam search and tree search fork sessions for free.

The mask admits a token only when some one- or two-terminal continuation of
the current parse stays alive on ``remainder + token`` and the worst-case
completion cost still fits the budget:

    (consumed + 1) + tokens_to_finish_the_continuation + tokens_to_finish_everything_else < budget

The strict inequality reserves exactly one slot for end-of-sequence, so any
run that only ever advances on admitted tokens terminates with a complete
output of at most ``budget`` tokens, eos included.  End-of-sequence itself is
admitted purely by the completion rule and never touches the automata.

Lexing is maximal munch over all terminal automata: a lexeme is committed
when the next byte would kill every live automaton, or immediately when no
byte can extend any of them; ties go to the earliest-declared terminal.  A
session is complete when flushing the remainder as final lexemes leaves only
nullable nonterminals on the stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from boundedgen.costs import CostTables
from boundedgen.dfa import DEAD, INF
from boundedgen.grammar import Grammar, Ll1Table, build_ll1_table
from boundedgen.vocab import Vocabulary


class EngineError(RuntimeError):
    """Base class for engine failures."""


class HashMismatchError(EngineError):
    """Cost tables were built for a different grammar or vocabulary."""


class BudgetError(EngineError):
    """Budget below 1, or too small for any complete output."""


class BudgetExhaustedError(EngineError):
    """The session already consumed its whole budget."""


class MaskedTokenError(EngineError):
    """advance() was called with a token the current mask denies."""


class LexError(EngineError):
    """No terminal can lex the accumulated bytes (contract violation)."""


class ParseError(EngineError):
    """The parser rejected a committed terminal (contract violation)."""


class DeadSessionError(EngineError):
    """The mask came out all-false; impossible after valid steps, so a bug."""


_EXPANSION_LIMIT = 100_000

MODE_FULL = "full"
MODE_GRAMMAR_ONLY = "grammar-only"


@dataclass(frozen=True)
class AcceptSequence:
    """A one- or two-terminal continuation the parser accepts right now.

    ``post_stack`` is the parser stack after feeding the sequence and
    ``d_cost`` the summed minimum tokens to consume everything left on it.
    """

    terminals: tuple[int, ...]
    post_stack: tuple[int, ...]
    d_cost: int


class _Missing:
    pass


_MISSING = _Missing()


@dataclass(frozen=True)
class EngineState:
    """Immutable snapshot of one generation session."""

    engine: "MaskEngine" = field(compare=False, repr=False)
    stack: tuple[int, ...]
    tau: tuple[int, ...]
    remainder: bytes
    lex_states: tuple[int, ...]
    lex_accept: tuple[int, int] | None  # (end offset in remainder, terminal id)
    consumed: int
    budget: int
    finished: bool = False

    @property
    def tokens_left(self) -> int:
        return self.budget - self.consumed


class MaskEngine:
    """Shared, immutable context: grammar, tables, vocabulary, caches."""

    def __init__(
        self,
        grammar: Grammar,
        tables: CostTables,
        vocab: Vocabulary,
        mode: str = MODE_FULL,
    ):
        if tables.grammar_hash != grammar.source_hash:
            raise HashMismatchError("cost tables were built from a different grammar")
        if tables.vocab_hash != vocab.source_hash:
            raise HashMismatchError("cost tables were built from a different vocabulary")
        if mode not in (MODE_FULL, MODE_GRAMMAR_ONLY):
            raise ValueError(f"unknown mode {mode!r}")
        self.grammar = grammar
        self.tables = tables
        self.vocab = vocab
        self.mode = mode
        self.table: Ll1Table = build_ll1_table(grammar)
        self._start_symbol = grammar.nt_symbol(grammar.start)
        self._lex_dfas = [t.dfa for t in grammar.terminals]
        self._lex_initial = tuple(d.initial for d in self._lex_dfas)
        self._live_out = [d.live_out() for d in self._lex_dfas]
        self._term_cost = tables.terminal_start_costs(grammar.n_terminals)
        self._feed_memo: dict[tuple[tuple[int, ...], int], tuple[int, ...] | None] = {}
        self._accseq_memo: dict[tuple[int, ...], tuple[AcceptSequence, ...]] = {}

    # -- sessions ------------------------------------------------------------

    def new_session(self, budget: int) -> EngineState:
        if budget < 1:
            raise BudgetError(f"budget must be at least 1, got {budget}")
        state = EngineState(
            engine=self,
            stack=(self._start_symbol,),
            tau=(),
            remainder=b"",
            lex_states=self._lex_initial,
            lex_accept=None,
            consumed=0,
            budget=budget,
        )
        if self.mode == MODE_FULL and not self.is_complete(state):
            need = self._min_completion_tokens(state.stack)
            if need + 1 > budget:
                raise BudgetError(
                    f"budget {budget} cannot fit any complete output "
                    f"(minimum is {need} tokens plus end-of-sequence)"
                )
        return state

    def _min_completion_tokens(self, stack: tuple[int, ...]) -> int:
        """Fewest tokens any admissible continuation needs, per the mask's
        own accounting: finish some accept sequence, then drain its stack."""
        best = INF
        for seq in self.accept_sequences(stack):
            automaton = self.tables.automata[seq.terminals]
            cost = int(self.tables.c[seq.terminals][automaton.initial]) + seq.d_cost
            best = min(best, cost)
        return best

    # -- parsing ---------------------------------------------------------------

    def feed(self, stack: tuple[int, ...], terminal: int) -> tuple[int, ...] | None:
        """Stack after consuming ``terminal``, or None if the parse fails.

        The stack top is the last element.  Nonterminals on top are expanded
        through the prediction table (possibly through nullable chains) until
        the terminal can be popped.
        """
        key = (stack, terminal)
        cached = self._feed_memo.get(key, _MISSING)
        if cached is not _MISSING:
            return cached
        g = self.grammar
        work = stack
        result: tuple[int, ...] | None = None
        for _ in range(_EXPANSION_LIMIT):
            if not work:
                result = None
                break
            top = work[-1]
            if g.is_terminal(top):
                result = work[:-1] if top == terminal else None
                break
            prod_idx = self.table.lookup(g.nt_id(top), terminal)
            if prod_idx is None:
                result = None
                break
            work = work[:-1] + tuple(reversed(g.productions[prod_idx].rhs))
        else:
            raise ParseError("expansion limit hit; grammar loops without consuming")
        self._feed_memo[key] = result
        return result

    def _stack_cost(self, stack: tuple[int, ...]) -> int:
        g = self.grammar
        total = 0
        for sym in stack:
            if g.is_terminal(sym):
                total += int(self._term_cost[sym])
            else:
                total += int(self.tables.d[g.nt_id(sym)])
            if total >= INF:
                return INF
        return total

    def accept_sequences(self, stack: tuple[int, ...]) -> tuple[AcceptSequence, ...]:
        """Every (a) and (a, b) the parser accepts from ``stack``."""
        cached = self._accseq_memo.get(stack)
        if cached is not None:
            return cached
        out: list[AcceptSequence] = []
        n_t = self.grammar.n_terminals
        for a in range(n_t):
            after_a = self.feed(stack, a)
            if after_a is None:
                continue
            out.append(AcceptSequence((a,), after_a, self._stack_cost(after_a)))
            for b in range(n_t):
                after_b = self.feed(after_a, b)
                if after_b is None:
                    continue
                out.append(AcceptSequence((a, b), after_b, self._stack_cost(after_b)))
        result = tuple(out)
        self._accseq_memo[stack] = result
        return result

    # -- lexing ----------------------------------------------------------------

    def _lex(
        self,
        stack: tuple[int, ...],
        lex_states: tuple[int, ...],
        lex_accept: tuple[int, int] | None,
        remainder: bytes,
        incoming: bytes,
    ) -> tuple[tuple[int, ...], tuple[int, ...], bytes, tuple[int, ...], tuple[int, int] | None]:
        """Feed ``incoming`` after ``remainder``; commit lexemes maximal-munch.

        Returns (stack, committed terminal ids, new remainder, lexer states,
        last-accept marker relative to the new remainder).
        """
        data = remainder + incoming
        states = list(lex_states)
        accept = lex_accept  # absolute offset into data
        start = 0
        pos = len(remainder)
        dfas = self._lex_dfas
        committed: list[int] = []

        def commit() -> None:
            nonlocal stack, start, pos, states, accept
            if accept is None:
                snippet = data[start : pos + 1]
                raise LexError(f"no terminal matches a prefix of {snippet!r}")
            end, tid = accept
            new_stack = self.feed(stack, tid)
            if new_stack is None:
                raise ParseError(
                    f"parser rejected terminal {self.grammar.terminals[tid].name!r} "
                    f"with stack top "
                    f"{self.grammar.symbol_name(stack[-1]) if stack else '<empty>'}"
                )
            stack = new_stack
            committed.append(tid)
            start = end
            pos = end
            states = list(self._lex_initial)
            accept = None

        while pos < len(data):
            byte = data[pos]
            any_live = False
            for t, q in enumerate(states):
                if q != DEAD:
                    q2 = int(dfas[t].transitions[q, byte])
                    states[t] = q2
                    if q2 != DEAD:
                        any_live = True
            if not any_live:
                commit()
                continue
            pos += 1
            for t, q in enumerate(states):
                if q != DEAD and dfas[t].accepting[q]:
                    accept = (pos, t)
                    break
            if not any(
                q != DEAD and self._live_out[t][q] for t, q in enumerate(states)
            ):
                commit()

        new_remainder = data[start:]
        rel_accept = None if accept is None else (accept[0] - start, accept[1])
        return stack, tuple(committed), new_remainder, tuple(states), rel_accept

    def _flush_stack(self, state: EngineState) -> tuple[int, ...] | None:
        """Parser stack after committing the remainder as trailing lexemes."""
        stack = state.stack
        data = state.remainder
        while data:
            states = list(self._lex_initial)
            accept: tuple[int, int] | None = None
            for pos, byte in enumerate(data):
                alive = False
                for t, q in enumerate(states):
                    if q != DEAD:
                        q2 = int(self._lex_dfas[t].transitions[q, byte])
                        states[t] = q2
                        alive = alive or q2 != DEAD
                if not alive:
                    break
                for t, q in enumerate(states):
                    if q != DEAD and self._lex_dfas[t].accepting[q]:
                        accept = (pos + 1, t)
                        break
            if accept is None:
                return None
            end, tid = accept
            fed = self.feed(stack, tid)
            if fed is None:
                return None
            stack = fed
            data = data[end:]
        return stack

    # -- completion and masking -------------------------------------------------

    def is_complete(self, state: EngineState) -> bool:
        """True when the emitted bytes already form a full sentence.

        The remainder, if any, must flush into complete lexemes, and the
        stack left over must be drainable to nothing, i.e. hold only
        nullable nonterminals.
        """
        stack = self._flush_stack(state) if state.remainder else state.stack
        if stack is None:
            return False
        g = self.grammar
        return all(
            not g.is_terminal(sym) and g.nt_id(sym) in self.table.nullable
            for sym in stack
        )

    def compute_mask(self, state: EngineState) -> np.ndarray:
        """Boolean vector over the vocabulary for the next step."""
        if state.finished:
            raise EngineError("session already emitted end-of-sequence")
        if state.consumed >= state.budget:
            raise BudgetExhaustedError(
                f"consumed {state.consumed} of {state.budget} tokens"
            )
        tables = self.tables
        budget_check = self.mode == MODE_FULL
        bits = np.zeros(self.vocab.size, dtype=bool)
        spent = state.consumed + 1
        for seq in self.accept_sequences(state.stack):
            if seq.d_cost >= INF:
                continue
            if budget_check and spent + seq.d_cost >= state.budget:
                continue
            automaton = tables.automata.get(seq.terminals)
            if automaton is None:
                raise EngineError(
                    f"no precomputed automaton for terminal sequence {seq.terminals}"
                )
            q = automaton.run(automaton.initial, state.remainder)
            if q == DEAD:
                continue
            row = tables.token_map[seq.terminals].get(q)
            if row is None:
                continue
            token_ids, successors = row
            costs = tables.c[seq.terminals][successors]
            if budget_check:
                admitted = token_ids[spent + costs + seq.d_cost < state.budget]
            else:
                admitted = token_ids[costs < INF]
            bits[admitted] = True
        if self.is_complete(state):
            bits[self.vocab.eos] = True
        if not bits.any():
            raise DeadSessionError(
                "mask is all-false; a session advanced only on admitted tokens "
                "can never reach this"
            )
        return bits

    def mask_report(self, state: EngineState) -> list[dict]:
        """Per-token mask explanation: the dominating sequence and cost terms.

        For admitted tokens the reported sequence is the cheapest admitting
        one; for denied tokens it is the closest miss (or None when every
        continuation dies on the automaton).
        """
        rows: list[dict] = []
        candidates: dict[int, tuple[int, AcceptSequence, int]] = {}
        spent = state.consumed + 1
        for seq in self.accept_sequences(state.stack):
            automaton = self.tables.automata[seq.terminals]
            q = automaton.run(automaton.initial, state.remainder)
            if q == DEAD:
                continue
            row = self.tables.token_map[seq.terminals].get(q)
            if row is None:
                continue
            token_ids, successors = row
            costs = self.tables.c[seq.terminals][successors]
            for tid, cost in zip(token_ids.tolist(), costs.tolist()):
                total = spent + cost + seq.d_cost
                best = candidates.get(tid)
                if best is None or total < best[0]:
                    candidates[tid] = (total, seq, cost)
        complete = self.is_complete(state)
        for tid in range(self.vocab.size):
            if tid == self.vocab.eos:
                rows.append(
                    {
                        "token": tid,
                        "admitted": complete and state.consumed < state.budget,
                        "sequence": None,
                        "consumed": state.consumed,
                        "automaton_cost": 0,
                        "dangling_cost": 0,
                    }
                )
                continue
            found = candidates.get(tid)
            if found is None:
                rows.append(
                    {
                        "token": tid,
                        "admitted": False,
                        "sequence": None,
                        "consumed": state.consumed,
                        "automaton_cost": None,
                        "dangling_cost": None,
                    }
                )
                continue
            total, seq, cost = found
            admitted = total < state.budget if self.mode == MODE_FULL else cost < INF
            rows.append(
                {
                    "token": tid,
                    "admitted": bool(admitted),
                    "sequence": tuple(
                        self.grammar.terminals[t].name for t in seq.terminals
                    ),
                    "consumed": state.consumed,
                    "automaton_cost": int(cost),
                    "dangling_cost": int(seq.d_cost),
                }
            )
        return rows

    # -- advancing ---------------------------------------------------------------

    def advance(
        self, state: EngineState, token: int, mask: np.ndarray | None = None
    ) -> EngineState:
        """Consume one admitted token and return the successor state."""
        if state.finished:
            raise EngineError("session already emitted end-of-sequence")
        if not 0 <= token < self.vocab.size:
            raise MaskedTokenError(f"token id {token} out of range")
        if mask is None:
            mask = self.compute_mask(state)
        if not mask[token]:
            raise MaskedTokenError(
                f"token {self.vocab.tokens[token]!r} is masked false at this step"
            )
        if token == self.vocab.eos:
            return replace(state, consumed=state.consumed + 1, finished=True)
        stack, committed, remainder, lex_states, lex_accept = self._lex(
            state.stack,
            state.lex_states,
            state.lex_accept,
            state.remainder,
            self.vocab.tokens[token],
        )
        return replace(
            state,
            stack=stack,
            tau=state.tau + committed,
            remainder=remainder,
            lex_states=lex_states,
            lex_accept=lex_accept,
            consumed=state.consumed + 1,
        )

    def replay(self, token_ids, budget: int) -> EngineState:
        """Rebuild a session from raw tokens without mask or budget checks.

        Raises LexError/ParseError when the bytes do not lex or parse; used
        for loading externally supplied prefixes and for validity checks.
        """
        state = EngineState(
            engine=self,
            stack=(self._start_symbol,),
            tau=(),
            remainder=b"",
            lex_states=self._lex_initial,
            lex_accept=None,
            consumed=0,
            budget=budget,
        )
        for token in token_ids:
            if token == self.vocab.eos:
                state = replace(state, consumed=state.consumed + 1, finished=True)
                continue
            stack, committed, remainder, lex_states, lex_accept = self._lex(
                state.stack,
                state.lex_states,
                state.lex_accept,
                state.remainder,
                self.vocab.tokens[token],
            )
            state = replace(
                state,
                stack=stack,
                tau=state.tau + committed,
                remainder=remainder,
                lex_states=lex_states,
                lex_accept=lex_accept,
                consumed=state.consumed + 1,
            )
        return state

    def text_is_complete(self, data: bytes) -> bool:
        """Would ``data`` as a whole be a grammatically complete output?"""
        try:
            stack, _, remainder, lex_states, lex_accept = self._lex(
                (self._start_symbol,), self._lex_initial, None, b"", data
            )
        except (LexError, ParseError):
            return False
        probe = EngineState(
            engine=self,
            stack=stack,
            tau=(),
            remainder=remainder,
            lex_states=lex_states,
            lex_accept=lex_accept,
            consumed=0,
            budget=1,
        )
        return self.is_complete(probe)


# --- module-level operation surface ------------------------------------------


def new_session(
    grammar: Grammar,
    tables: CostTables,
    vocab: Vocabulary,
    budget: int,
    mode: str = MODE_FULL,
) -> EngineState:
    """Fresh session: empty terminals and remainder, stack holds the start symbol."""
    return MaskEngine(grammar, tables, vocab, mode).new_session(budget)


def parser_feed(state: EngineState, terminal: int) -> tuple[int, ...]:
    """Parser stack after consuming ``terminal``; raises ParseError on failure."""
    result = state.engine.feed(state.stack, terminal)
    if result is None:
        g = state.engine.grammar
        top = g.symbol_name(state.stack[-1]) if state.stack else "<empty>"
        raise ParseError(
            f"cannot accept terminal {g.terminals[terminal].name!r}; stack top is {top}"
        )
    return result


def enumerate_accept_sequences(state: EngineState) -> tuple[AcceptSequence, ...]:
    return state.engine.accept_sequences(state.stack)


def compute_mask(state: EngineState) -> np.ndarray:
    return state.engine.compute_mask(state)


def advance(state: EngineState, token: int, mask: np.ndarray | None = None) -> EngineState:
    return state.engine.advance(state, token, mask)


def is_complete(state: EngineState) -> bool:
    return state.engine.is_complete(state)
