"""Score a few hypotheses against one reference with every metric.

Run:  python3 demos/metrics_tour.py
"""

from textgrpo.metrics import ALL_METRICS, reward
from textgrpo.vocab import Vocabulary, tokenize

reference = "the cat sat on the mat"
hypotheses = [
    "the cat sat on the mat",        # exact
    "the cat sat on a mat",          # one substitution
    "on the mat the cat sat",        # same words, reordered
    "the cat",                       # short: brevity penalty bites BLEU
    "a dog ran",                     # nothing in common
]

words = sorted(set(" ".join([reference] + hypotheses).split()))
vocab = Vocabulary(words)
ref = tokenize(reference, vocab)

print(f"reference: {reference!r}\n")
print(f"{'hypothesis':28s}" + "".join(f"{m.label:>9s}" for m in ALL_METRICS))
for hyp in hypotheses:
    cand = tokenize(hyp, vocab)
    scores = [100 * reward(m, cand, ref) for m in ALL_METRICS]
    print(f"{hyp:28s}" + "".join(f"{s:9.2f}" for s in scores))

# BLEU only smooths orders above one: with no bigram overlap the bigram
# precision becomes 1/(count+1) instead of zeroing the score.
cand = tokenize("mat the on sat cat the", vocab)
print("\nreversed reference, BLEU x100:", round(100 * reward("BLEU", cand, ref), 2))
