"""Fine-grained attention: one softmax over time for every hidden dimension.

Basic attention shares a single weight per time step across dimensions.
Feeding both the same scores shows where they agree.

Run: python3 demos/attention_weights.py
"""
import numpy as np

from attnfc.attention import attend_fine, basic_from_scores, fine_from_scores, init_scorer
from attnfc.numerics import Tensor

rng = np.random.default_rng(3)
T, m = 7, 4
H = Tensor(rng.normal(size=(T, m)))
d_prev = Tensor(rng.normal(size=m))

scorer = init_scorer(m, m, 8, m, rng)
result = attend_fine(scorer, H, d_prev)
np.set_printoptions(precision=3, suppress=True)
print("weights (time x dim):")
print(result.weights.data)
print("column sums:", result.weights.data.sum(axis=0))
print("context:", result.context.data)

# Tie the scores across dimensions and the two variants coincide.
e = rng.normal(size=(T, 1))
fine = fine_from_scores(Tensor(np.repeat(e, m, axis=1)), H)
basic = basic_from_scores(Tensor(e[:, 0]), H)
print("tied-score gap:", np.abs(fine.context.data - basic.context.data).max())
