"""Reproduce the truncation failure mode and how the budget term removes it.

A model that loves whitespace (think pretty-printed JSON) wastes its token
allowance on indentation.  Under a grammar-only mask the generation is cut
off mid-structure when the budget runs out; with the budget term in the
mask, whitespace stops being admitted the moment it would make completion
impossible, and every output closes properly.
"""

from boundedgen import (
    MaskEngine,
    UniformModel,
    VerbosityBiasedModel,
    Vocabulary,
    build_cost_tables,
    greedy_decode,
    load_grammar,
    bundled_json_grammar_path,
)

tokens = [
    "{", "}", "[", "]", ":", ",", '"',
    " ", "\n", "  ", "    ",
    "true", "false", "null",
    "0", "1", "2", "5",
    "a", "b", "id", "key",
    '"a', 'a"', '":', '",',
]
vocab = Vocabulary([t.encode() for t in tokens], eos=len(tokens))
grammar = load_grammar(bundled_json_grammar_path())
tables = build_cost_tables(grammar, vocab)

# Uniform base, whitespace mass multiplied by 50.
model = VerbosityBiasedModel(UniformModel(vocab.size), 50.0, vocab)

budget = 12
full = MaskEngine(grammar, tables, vocab, mode="full")
grammar_only = MaskEngine(grammar, tables, vocab, mode="grammar-only")

ids_full = greedy_decode(model, full.new_session(budget))
ids_go = greedy_decode(model, grammar_only.new_session(budget))

print(f"budget = {budget} tokens including end-of-sequence\n")
print(f"grammar-only mask: {vocab.decode(ids_go)!r}")
print(f"  tokens used: {len(ids_go)}, complete: {full.text_is_complete(vocab.decode(ids_go))}")
print(f"budget-aware mask: {vocab.decode(ids_full)!r}")
print(f"  tokens used: {len(ids_full)}, complete: {full.text_is_complete(vocab.decode(ids_full))}")
print()
print("The budget-aware run spends the same early tokens on whitespace, but")
print("the mask closes the door on padding exactly when the remaining budget")
print("equals the cheapest way to finish the value.")
