"""Greedy falls into a likelihood trap; beam search and tree search escape it.

The scripted model puts slightly more first-step mass on "[" than on the
token that starts the intended object, but everything after "[" is a
low-probability wasteland.  Greedy takes the bait.  Beam search compares
whole-sequence scores and wins; the tree search additionally estimates each
first move by rolling out to completion and scoring with the geometric mean
of model probabilities (inverse perplexity).
"""

import numpy as np

from boundedgen import (
    MaskEngine,
    MctsConfig,
    ScriptedModel,
    Vocabulary,
    beam_search,
    build_cost_tables,
    bundled_json_grammar_path,
    greedy_decode,
    load_grammar,
    mcts_decode,
)

tokens = ["{", "}", "[", "]", ":", ",", '"', "1", "a", '{"', '"a', '":', '",']
vocab = Vocabulary([t.encode() for t in tokens], eos=len(tokens))
grammar = load_grammar(bundled_json_grammar_path())
tables = build_cost_tables(grammar, vocab)
engine = MaskEngine(grammar, tables, vocab)

target = b'{"a":1}'
target_ids = vocab.tokenize(target)

steps = []
first = np.full(vocab.size, 0.002)
first[vocab.tokenize(b"[")[0]] = 0.45  # the trap
first[target_ids[0]] = 0.40            # the intended path
steps.append(first)
for tok in target_ids[1:]:
    step = np.full(vocab.size, 0.002)
    step[tok] = 0.8
    steps.append(step)
final = np.full(vocab.size, 0.002)
final[vocab.eos] = 0.8
steps.append(final)
model = ScriptedModel(steps, vocab.size, after="uniform")

budget = len(target_ids) + 2
print(f"target output: {target.decode()}  (budget {budget} tokens)\n")
for name, ids in [
    ("greedy", greedy_decode(model, engine.new_session(budget))),
    ("beam:10", beam_search(model, engine.new_session(budget), beams=10)),
    ("mcts:20", mcts_decode(model, engine.new_session(budget), config=MctsConfig(trials=20))),
]:
    text = vocab.decode(ids)
    hit = "exact match" if text == target else "complete but wrong content"
    print(f"{name:<8} -> {text.decode():<12} {hit}")

print()
print("All three outputs are grammatically complete and within budget; only")
print("the lookahead strategies also recover the intended content.")
