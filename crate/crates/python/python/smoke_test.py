"""Exercise the bindings end to end with Python-side agents."""

import negotiate_py as ng

space = ng.LabelSpace.binary()
assert space.labels == ["positive", "negative"]
assert space.canonicalize("Negative.") == "negative"

decision, steps = ng.parse_generator(
    "The input contains positive sentiment. Rationale:\nStep 1: warm words\nStep 2: happy ending", space
)
assert decision == "positive" and len(steps) == 2, steps
assert ng.parse_discriminator("No. The input contains negative sentiment.", space, "positive") == (
    "no",
    "The input contains negative sentiment.",
    "negative",
)

assert ng.reconcile(space, ("positive", 2), (None, 3)) == ("final", "positive")
assert ng.reconcile(space, ("positive", 2), ("negative", 2)) == ("escalate", None)
label, counts, fallback = ng.majority_vote(
    space, [("negative", 1), ("positive", 2), ("negative", 3), (None, 3), ("positive", 1), (None, 3)], "positive"
)
assert (label, fallback) == ("positive", False), (label, counts)


def stubborn(prompt):
    if "Response from the generator:" in prompt:
        return "Yes."
    return "The input contains positive sentiment. Rationale:\nStep 1: it says so"


def critic(prompt):
    if "Response from the generator:" in prompt:
        return "No. The input contains negative sentiment."
    return "The input contains negative sentiment."


n = ng.Negotiator({"a": stubborn, "b": critic, "lex": "lexicon"})
record = n.session("dual_negotiation", ["a", "b"], "a dull film", gold="negative")
assert record["final"] in ("positive", "negative"), record
assert record["primary"]["turns"][0]["agent_id"] == "a"

rows = [("a wonderful film", "positive"), ("an awful, boring mess", "negative")]
train = [("great fun", "positive"), ("boring and bad", "negative")]
lex = ng.Negotiator({"x": "lexicon", "y": "lexicon", "z": "lexicon"}, train=train, k=1)
out = lex.evaluate("dual_with_arbitration", ["x", "y", "z"], rows, concurrency=2)
assert out["evaluated"] == 2 and out["accuracy"] == 1.0, out

try:
    ng.Negotiator({"a": 3})
except ValueError:
    pass
else:
    raise AssertionError("non-callable agent accepted")

print("smoke test ok")
