"""Time2Vec: a linear trend channel plus learned ReLU-activated frequencies.

Scaling time by c and the frequencies by 1/c leaves the embedding unchanged,
up to floating-point rounding.

Run: python3 demos/time2vec_embedding.py
"""
import numpy as np

from attnfc.layers import init_time2vec, time2vec, time2vec_sequence

rng = np.random.default_rng(1)
t2v = init_time2vec(4, rng)
days = np.arange(0, 10) / 100.0
emb = time2vec_sequence(t2v, days)
np.set_printoptions(precision=4, suppress=True)
print(emb.data)

t = 0.37
base = time2vec(t2v, t).data
for c in (2.0, 7.0, 100.0):
    t2v.alpha.data /= c
    rescaled = time2vec(t2v, c * t).data
    t2v.alpha.data *= c
    print(f"c={c:>5}: max |difference| = {np.abs(rescaled - base).max():.1e}")
