"""
Hashing embeddings and the HNSW index
=====================================

Texts become unit vectors by signed feature hashing, so inner product is
cosine similarity. The HNSW graph answers top-k queries over them.
"""

# %%
import numpy as np

from htm_ear.ann_index import HNSWIndex
from htm_ear.embedding import HashingEmbedder, similarity

emb = HashingEmbedder(dim=64)
a = emb.embed("node ent-000042 logged checkpoint for the storage")
b = emb.embed("node ent-000042 logged panic checkpoint for the storage")
c = emb.embed("client ent-000777 requested backup from gateway")
print("norm", round(float(np.linalg.norm(a)), 6))
print("near-duplicate sim", round(similarity(a, b), 3))
print("unrelated sim     ", round(similarity(a, c), 3))

# %%
# Recall against an exhaustive scan, before and after heavy deletion.
rng = np.random.default_rng(0)
data = rng.normal(size=(2000, 64))
data /= np.linalg.norm(data, axis=1, keepdims=True)
index = HNSWIndex(64, seed=0)
for i, v in enumerate(data):
    index.insert(i, v)


def recall_at(k, live):
    hits = 0
    for q in data[:100]:
        truth = set(live[np.argsort(-(data[live] @ q))[:k]].tolist())
        hits += len(truth & set(index.search_raw(q, k)[0]))
    return hits / (100 * k)


print("recall@10", recall_at(10, np.arange(2000)))

for i in range(100, 1300):
    index.remove(i)
live = np.setdiff1d(np.arange(2000), np.arange(100, 1300))
print("after 1200 removals: live", index.live_count(), "rebuilds", index.rebuild_count,
      "recall@10", recall_at(10, live))
