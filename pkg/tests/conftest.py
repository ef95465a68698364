"""Shared fixtures: small grammars, vocabularies, and prebuilt cost tables."""

from __future__ import annotations

import json
import random

import pytest

from boundedgen.costs import build_cost_tables
from boundedgen.engine import MaskEngine
from boundedgen.evalharness import Task
from boundedgen.grammar import load_grammar, parse_grammar
from boundedgen.vocab import Vocabulary

PAREN_GRAMMAR = r"""
S: E ;
E: X | LP E RP ;
X: /x/ ;
LP: /\(/ ;
RP: /\)/ ;
"""

MINI_JSON_GRAMMAR = """
S: Value ;
Value: STR | NUM | LB Items RB ;
Items: ε | Value ItemsTail ;
ItemsTail: ε | COMMA Value ItemsTail ;
STR: /"[ab]*"/ ;
NUM: /[0-9]+/ ;
LB: /\\[/ ;
RB: /\\]/ ;
COMMA: /,/ ;
"""

PAREN_TOKENS = [b"x", b"(", b")", b"(x"]
MINI_TOKENS = [b'"', b"a", b'"a', b'a"', b'"a"', b"1", b"12", b"[", b"]", b",", b"[1"]


def make_vocab(tokens: list[bytes]) -> Vocabulary:
    return Vocabulary(tokens, eos=len(tokens))


@pytest.fixture(scope="session")
def paren_grammar():
    return parse_grammar(PAREN_GRAMMAR)


@pytest.fixture(scope="session")
def paren_vocab():
    return make_vocab(PAREN_TOKENS)


@pytest.fixture(scope="session")
def paren_tables(paren_grammar, paren_vocab):
    return build_cost_tables(paren_grammar, paren_vocab)


@pytest.fixture(scope="session")
def paren_engine(paren_grammar, paren_tables, paren_vocab):
    return MaskEngine(paren_grammar, paren_tables, paren_vocab)


@pytest.fixture(scope="session")
def mini_grammar():
    return parse_grammar(MINI_JSON_GRAMMAR)


@pytest.fixture(scope="session")
def json_grammar():
    from boundedgen import bundled_json_grammar_path

    return load_grammar(bundled_json_grammar_path())


def eval_token_strings() -> list[str]:
    """Deterministic ~90-token vocabulary for JSON generation at desk scale."""
    tokens = ["{", "}", "[", "]", ":", ",", '"']
    tokens += [" ", "\n", "\t", "  ", "    "]
    tokens += ["true", "false", "null"]
    tokens += [str(d) for d in range(10)]
    tokens += ["10", "25", "100", "-", "-1", "0.5", "3.14"]
    tokens += list("abcdefghijklmnopqrstuvwxyz")
    tokens += ["id", "name", "key", "value", "data", "item", "count", "type", "flag"]
    tokens += ['"a', 'a"', '"key', '"id"', '"name"', '":', '",', '""']
    tokens += ["},", "],", ":[", ":{", '{"', ',"']
    seen: set[str] = set()
    out: list[str] = []
    for tok in tokens:
        if tok not in seen:
            seen.add(tok)
            out.append(tok)
    return out


@pytest.fixture(scope="session")
def json_vocab():
    return make_vocab([t.encode() for t in eval_token_strings()])


@pytest.fixture(scope="session")
def json_tables(json_grammar, json_vocab):
    return build_cost_tables(json_grammar, json_vocab)


@pytest.fixture(scope="session")
def json_engine(json_grammar, json_tables, json_vocab):
    return MaskEngine(json_grammar, json_tables, json_vocab)


# --- synthetic JSON tasks ------------------------------------------------------

_KEYS = ["a", "b", "id", "key", "name", "data", "item", "count", "type", "flag"]
_WORDS = ["a", "ab", "abc", "cafe", "face", "bead", "deed", "idea"]


def _random_value(rng: random.Random, depth: int):
    choices = ["int", "str", "bool", "null"]
    if depth > 0:
        choices += ["list", "obj"]
    kind = rng.choice(choices)
    if kind == "int":
        return rng.choice([0, 1, 2, 5, 10, 25, 100])
    if kind == "str":
        return rng.choice(_WORDS)
    if kind == "bool":
        return rng.choice([True, False])
    if kind == "null":
        return None
    if kind == "list":
        return [_random_value(rng, depth - 1) for _ in range(rng.randint(0, 3))]
    return {
        rng.choice(_KEYS): _random_value(rng, depth - 1)
        for _ in range(rng.randint(1, 3))
    }


def make_json_tasks(vocab: Vocabulary, count: int, seed: int) -> list[Task]:
    """Synthetic text-to-JSON tasks with token-accurate reference lengths."""
    rng = random.Random(seed)
    tasks = []
    for i in range(count):
        value = {
            rng.choice(_KEYS): _random_value(rng, 1)
            for _ in range(rng.randint(1, 3))
        }
        text = json.dumps(value, separators=(",", ":"))
        l_gt = len(vocab.tokenize(text.encode("utf-8"))) + 1  # content plus eos
        tasks.append(
            Task(task_id=f"t{i}", prompt="", ground_truth=text, l_gt=l_gt)
        )
    return tasks
