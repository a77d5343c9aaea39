"""From raw text to a BM25 ranking, then one round of Rocchio expansion.

Run: python3 demos/01_bm25_basics.py
"""

from nprf import Document, Query, bm25_search, build_index, rocchio_expand
from nprf.corpus import load_stopwords, preprocess

stop = load_stopwords()
raw = {
    "n1": "Rising sea levels threaten coastal cities and island nations.",
    "n2": "Glaciers are melting faster as global temperatures climb.",
    "n3": "The city council approved a new budget for road repairs.",
    "n4": "Ocean warming and melting ice sheets push sea levels higher.",
    "n5": "Island nations ask for climate finance at the summit.",
}

# Documents and queries go through the same pipeline: lowercase, split, drop stopwords, stem.
docs = [Document(doc_id, tuple(preprocess(text, stop))) for doc_id, text in raw.items()]
for d in docs[:2]:
    print(f"{d.doc_id}: {' '.join(d.terms)}")

index = build_index(docs)
print(f"\nindexed {index.doc_count} documents, {len(index.vocabulary)} terms, avg length {index.avg_doc_len:.2f}")

query = Query("q1", tuple(preprocess("sea level rise", stop)))
run = bm25_search(query, index, depth=10)
print(f"\nBM25 for {query.terms}:")
for e in run:
    print(f"  {e.rank}. {e.doc_id}  {e.score:.4f}")

# Expansion pulls terms from the top documents. Here "ocean" and "ic" (ice)
# come from n4, which now overtakes n1.
expanded = rocchio_expand(query, run, index, fb_docs=2, fb_terms=5)
print("\nexpanded query:", ", ".join(f"{t}:{w:g}" for t, w in expanded.weighted_terms()))
for e in bm25_search(expanded, index, depth=10):
    print(f"  {e.rank}. {e.doc_id}  {e.score:.4f}")
