"""Context-free grammars with regex terminals and LL(1) table construction.

Grammar file format (UTF-8 text, declarations separated by ``;``)::

    # comment until end of line
    Json:  WS Value WS ;
    WS:    ws | ε ;          # alternatives split on '|', empty or
    ws:    /[ \\t\\n\\r]+/ ;      # 'ε' denotes the empty production
    lbrace: /\\{/ ;

A name declared with a ``/regex/`` body is a terminal; a name declared with
symbol alternatives is a nonterminal.  The first nonterminal declared is the
start symbol.  Terminal priority (lexer tie-breaking) is declaration order.
No grammar transformation is performed: the rules must already be LL(1), and
left recursion is reported as a table conflict rather than rewritten.

Symbols are encoded as dense integers: terminal ``t`` is ``t`` in
``[0, n_terminals)`` and nonterminal ``A`` is ``n_terminals + A``.  The
pseudo-terminal END (``-1``) marks end of input in FIRST/FOLLOW sets.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from boundedgen.dfa import Dfa, RegexError, compile_regex

END = -1
EPSILON_MARK = "ε"


class GrammarError(ValueError):
    """Base class for grammar definition problems."""


class GrammarSyntaxError(GrammarError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UndeclaredSymbolError(GrammarError):
    def __init__(self, name: str, line: int):
        super().__init__(f"line {line}: symbol {name!r} is never declared")
        self.name = name


class DuplicateTerminalError(GrammarError):
    def __init__(self, name: str, line: int):
        super().__init__(f"line {line}: terminal {name!r} declared twice")
        self.name = name


class LlConflictError(GrammarError):
    """Two productions compete for one (nonterminal, lookahead) cell."""

    def __init__(self, nonterminal: str, lookahead: str, first: str, second: str):
        super().__init__(
            f"grammar is not LL(1): on lookahead {lookahead} nonterminal "
            f"{nonterminal} admits both [{first}] and [{second}]"
        )
        self.nonterminal = nonterminal
        self.lookahead = lookahead


@dataclass(frozen=True)
class Terminal:
    name: str
    pattern: str
    dfa: Dfa
    priority: int  # declaration index; lower wins lexer ties


@dataclass(frozen=True)
class Production:
    index: int
    lhs: int  # nonterminal id
    rhs: tuple[int, ...]  # encoded symbols; empty tuple = epsilon


@dataclass(frozen=True)
class Grammar:
    terminals: tuple[Terminal, ...]
    nonterminal_names: tuple[str, ...]
    productions: tuple[Production, ...]
    start: int  # nonterminal id
    source_hash: str

    @property
    def n_terminals(self) -> int:
        return len(self.terminals)

    @property
    def n_nonterminals(self) -> int:
        return len(self.nonterminal_names)

    def is_terminal(self, sym: int) -> bool:
        return 0 <= sym < self.n_terminals

    def nt_id(self, sym: int) -> int:
        return sym - self.n_terminals

    def nt_symbol(self, nt: int) -> int:
        return self.n_terminals + nt

    def symbol_name(self, sym: int) -> str:
        if sym == END:
            return "<end>"
        if self.is_terminal(sym):
            return self.terminals[sym].name
        return self.nonterminal_names[self.nt_id(sym)]

    def productions_of(self, nt: int) -> tuple[Production, ...]:
        return tuple(p for p in self.productions if p.lhs == nt)

    def format_production(self, prod: Production) -> str:
        rhs = " ".join(self.symbol_name(s) for s in prod.rhs) or EPSILON_MARK
        return f"{self.nonterminal_names[prod.lhs]}: {rhs}"


@dataclass(frozen=True)
class Ll1Table:
    """Prediction table plus the FIRST/FOLLOW/nullable sets it came from.

    ``predict[(nt, lookahead)]`` gives the unique production index; lookahead
    END (-1) covers end of input.  ``first`` is keyed by encoded symbol,
    ``follow`` by nonterminal id.
    """

    predict: dict[tuple[int, int], int]
    nullable: frozenset[int]  # nonterminal ids
    first: dict[int, frozenset[int]]
    follow: dict[int, frozenset[int]]

    def lookup(self, nt: int, lookahead: int) -> int | None:
        return self.predict.get((nt, lookahead))


# --- grammar file parsing ----------------------------------------------------


def _split_declarations(text: str) -> list[tuple[str, int, int]]:
    """Split on ';' outside comments and /regex/ bodies.

    Returns (declaration text, line, column) for each declaration start.
    """
    decls = []
    buf: list[str] = []
    line, col = 1, 1
    start_line, start_col = 1, 1
    in_regex = False
    in_comment = False
    escaped = False
    pending = False  # buffer holds non-whitespace content
    i = 0
    while i < len(text):
        ch = text[i]
        if in_comment:
            if ch == "\n":
                in_comment = False
        elif in_regex:
            buf.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == "/":
                in_regex = False
        elif ch == "#":
            in_comment = True
        elif ch == "/":
            in_regex = True
            if not pending:
                start_line, start_col = line, col
                pending = True
            buf.append(ch)
        elif ch == ";":
            decls.append(("".join(buf), start_line, start_col))
            buf = []
            pending = False
        else:
            if not pending and not ch.isspace():
                start_line, start_col = line, col
                pending = True
            buf.append(ch)
        if ch == "\n":
            line += 1
            col = 1
        else:
            col += 1
        i += 1
    if in_regex:
        raise GrammarSyntaxError("unterminated /regex/", start_line, start_col)
    tail = "".join(buf).strip()
    if tail:
        raise GrammarSyntaxError(f"missing ';' after {tail.splitlines()[0]!r}", start_line, start_col)
    return [(d, ln, c) for d, ln, c in decls if d.strip()]


def _is_identifier(name: str) -> bool:
    return name.isidentifier() or (name.isascii() and name.replace("_", "a").isalnum())


def parse_grammar(text: str, state_cap: int = 10_000) -> Grammar:
    """Parse a grammar definition and compile every terminal to a DFA."""
    term_decls: list[tuple[str, str, int]] = []  # name, pattern, line
    rule_decls: list[tuple[str, list[list[str]], int]] = []  # name, alternatives, line
    seen_terminals: dict[str, int] = {}

    for decl, line, col in _split_declarations(text):
        head, sep, body = decl.partition(":")
        if not sep:
            raise GrammarSyntaxError(f"expected 'name: ...' in {decl.strip()!r}", line, col)
        name = head.strip()
        if not name or not _is_identifier(name):
            raise GrammarSyntaxError(f"bad symbol name {name!r}", line, col)
        body = body.strip()
        if body.startswith("/"):
            if not body.endswith("/") or len(body) < 2:
                raise GrammarSyntaxError(f"bad regex body for {name!r}", line, col)
            if name in seen_terminals:
                raise DuplicateTerminalError(name, line)
            seen_terminals[name] = line
            term_decls.append((name, body[1:-1], line))
        else:
            alts = []
            for alt in body.split("|"):
                symbols = [s for s in alt.split() if s != EPSILON_MARK]
                alts.append(symbols)
            rule_decls.append((name, alts, line))

    if not rule_decls:
        raise GrammarError("grammar declares no rules")

    terminals: list[Terminal] = []
    term_ids: dict[str, int] = {}
    for priority, (name, pattern, line) in enumerate(term_decls):
        try:
            dfa = compile_regex(pattern, state_cap=state_cap)
        except RegexError as exc:
            raise GrammarError(f"terminal {name!r}: {exc}") from exc
        if dfa.accepts_empty():
            raise GrammarError(
                f"terminal {name!r} matches the empty string; "
                "the lexer never emits empty lexemes"
            )
        term_ids[name] = priority
        terminals.append(Terminal(name, pattern, dfa, priority))

    nt_names: list[str] = []
    nt_ids: dict[str, int] = {}
    for name, _, line in rule_decls:
        if name in term_ids:
            raise GrammarSyntaxError(
                f"{name!r} is declared both as a terminal and a rule", line, 1
            )
        if name not in nt_ids:
            nt_ids[name] = len(nt_names)
            nt_names.append(name)

    n_t = len(terminals)
    productions: list[Production] = []
    for name, alts, line in rule_decls:
        lhs = nt_ids[name]
        for symbols in alts:
            rhs = []
            for sym in symbols:
                if sym in term_ids:
                    rhs.append(term_ids[sym])
                elif sym in nt_ids:
                    rhs.append(n_t + nt_ids[sym])
                else:
                    raise UndeclaredSymbolError(sym, line)
            productions.append(Production(len(productions), lhs, tuple(rhs)))

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Grammar(
        terminals=tuple(terminals),
        nonterminal_names=tuple(nt_names),
        productions=tuple(productions),
        start=0,
        source_hash=digest,
    )


def load_grammar(path) -> Grammar:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_grammar(fh.read())


# --- FIRST / FOLLOW / prediction table --------------------------------------


def _compute_nullable(g: Grammar) -> frozenset[int]:
    nullable: set[int] = set()
    changed = True
    while changed:
        changed = False
        for prod in g.productions:
            if prod.lhs in nullable:
                continue
            if all(
                not g.is_terminal(s) and g.nt_id(s) in nullable for s in prod.rhs
            ):
                nullable.add(prod.lhs)
                changed = True
    return frozenset(nullable)


def _compute_first(g: Grammar, nullable: frozenset[int]) -> dict[int, set[int]]:
    first: dict[int, set[int]] = {t: {t} for t in range(g.n_terminals)}
    for nt in range(g.n_nonterminals):
        first[g.nt_symbol(nt)] = set()
    changed = True
    while changed:
        changed = False
        for prod in g.productions:
            target = first[g.nt_symbol(prod.lhs)]
            before = len(target)
            for sym in prod.rhs:
                target.update(first[sym])
                if g.is_terminal(sym) or g.nt_id(sym) not in nullable:
                    break
            if len(target) != before:
                changed = True
    return first


def first_of_sequence(
    g: Grammar, table_first: dict[int, frozenset[int]] | dict[int, set[int]],
    nullable: frozenset[int], seq: tuple[int, ...],
) -> tuple[set[int], bool]:
    """FIRST set of a symbol sequence plus whether the whole sequence is nullable."""
    out: set[int] = set()
    for sym in seq:
        out.update(table_first[sym])
        if g.is_terminal(sym) or g.nt_id(sym) not in nullable:
            return out, False
    return out, True


def build_ll1_table(g: Grammar) -> Ll1Table:
    """FIRST/FOLLOW to fixpoint, then the prediction table.

    Raises LlConflictError (naming the cell and both productions) when any
    (nonterminal, lookahead) would hold two productions; left recursion in a
    productive grammar always surfaces this way.
    """
    nullable = _compute_nullable(g)
    first = _compute_first(g, nullable)

    follow: dict[int, set[int]] = {nt: set() for nt in range(g.n_nonterminals)}
    follow[g.start].add(END)
    changed = True
    while changed:
        changed = False
        for prod in g.productions:
            for i, sym in enumerate(prod.rhs):
                if g.is_terminal(sym):
                    continue
                nt = g.nt_id(sym)
                tail_first, tail_nullable = first_of_sequence(
                    g, first, nullable, prod.rhs[i + 1 :]
                )
                before = len(follow[nt])
                follow[nt].update(tail_first)
                if tail_nullable:
                    follow[nt].update(follow[prod.lhs])
                if len(follow[nt]) != before:
                    changed = True

    predict: dict[tuple[int, int], int] = {}
    for prod in g.productions:
        heads, seq_nullable = first_of_sequence(g, first, nullable, prod.rhs)
        if seq_nullable:
            heads = heads | follow[prod.lhs]
        for lookahead in sorted(heads):
            cell = (prod.lhs, lookahead)
            other = predict.get(cell)
            if other is not None and other != prod.index:
                raise LlConflictError(
                    g.nonterminal_names[prod.lhs],
                    g.symbol_name(lookahead),
                    g.format_production(g.productions[other]),
                    g.format_production(prod),
                )
            predict[cell] = prod.index

    return Ll1Table(
        predict=predict,
        nullable=nullable,
        first={sym: frozenset(s) for sym, s in first.items()},
        follow={nt: frozenset(s) for nt, s in follow.items()},
    )


# --- terminal adjacency -------------------------------------------------------


def _compute_last(g: Grammar, nullable: frozenset[int]) -> dict[int, set[int]]:
    last: dict[int, set[int]] = {t: {t} for t in range(g.n_terminals)}
    for nt in range(g.n_nonterminals):
        last[g.nt_symbol(nt)] = set()
    changed = True
    while changed:
        changed = False
        for prod in g.productions:
            target = last[g.nt_symbol(prod.lhs)]
            before = len(target)
            for sym in reversed(prod.rhs):
                target.update(last[sym])
                if g.is_terminal(sym) or g.nt_id(sym) not in nullable:
                    break
            if len(target) != before:
                changed = True
    return last


def adjacent_terminal_pairs(g: Grammar, table: Ll1Table) -> frozenset[tuple[int, int]]:
    """Ordered terminal pairs that can appear adjacently in some derivation.

    For every production and every pair of positions with only nullable
    symbols between them, pair up what the left symbol can end with and what
    the right symbol can start with.  This over-approximates, never misses,
    the two-terminal continuations a top-down parse can request.
    """
    nullable = table.nullable
    first = table.first
    last = _compute_last(g, nullable)
    pairs: set[tuple[int, int]] = set()
    for prod in g.productions:
        rhs = prod.rhs
        for i in range(len(rhs)):
            for j in range(i + 1, len(rhs)):
                between = rhs[i + 1 : j]
                if any(
                    g.is_terminal(s) or g.nt_id(s) not in nullable for s in between
                ):
                    break
                for a in last[rhs[i]]:
                    for b in first[rhs[j]]:
                        pairs.add((a, b))
    return frozenset(pairs)
