"""Recomputes the committed reference reports for the bundled corpus.

Written independently of the Rust code: corpus statistics with the default
whitespace + lowercase tokenizer, and the top-2 most-frequent-genre baseline
fitted and scored on the whole corpus.

    python3 scripts/fixture_oracle.py fixtures/mini_corpus.jsonl fixtures
"""
import json
import sys
from pathlib import Path

GENRES = [
    "drama", "comedy", "thriller", "romance", "action", "family", "horror",
    "crime", "adventure", "animation", "fantasy", "sci-fi", "mystery",
    "biography", "music", "history", "war", "western", "sport", "musical",
]
BINS = ["[0,50]", "(50,100]", "(100,150]", "(150,200]", "(200,inf)"]


def token_bin(n):
    for i, hi in enumerate([50, 100, 150, 200]):
        if n <= hi:
            return BINS[i]
    return BINS[4]


def stats(records):
    n = len(records)
    freq = {g: sum(g in r["genres"] for r in records) / n for g in GENRES}
    sizes, bins = {}, {b: 0 for b in BINS}
    tokens = 0
    for r in records:
        k = len(r["genres"])
        sizes[str(k)] = sizes.get(str(k), 0) + 1
        t = len(r["plot"].lower().split())
        tokens += t
        bins[token_bin(t)] += 1
    return {
        "n_records": n,
        "genre_freq": freq,
        "set_size_hist": sizes,
        "mean_genres": sum(len(r["genres"]) for r in records) / n,
        "token_hist": bins,
        "mean_tokens": tokens / n,
        "unique_genre_sets": len({frozenset(r["genres"]) for r in records}),
    }


def top2_report(records):
    counts = [sum(g in r["genres"] for r in records) for g in GENRES]
    order = sorted(range(len(GENRES)), key=lambda i: (-counts[i], i))
    pred = {GENRES[i] for i in order[:2]}
    tp = fp = fn = tn = hits = 0
    jac = 0.0
    for r in records:
        truth = set(r["genres"])
        inter = len(pred & truth)
        tp += inter
        fp += len(pred - truth)
        fn += len(truth - pred)
        tn += len(GENRES) - len(pred | truth)
        hits += inter > 0
        jac += inter / len(pred | truth)
    n = len(records)
    p = tp / (tp + fp)
    rc = tp / (tp + fn)
    return {
        "genres": sorted(pred, key=GENRES.index),
        "aggregate": {
            "n_examples": n,
            "hit_rate": hits / n,
            "mean_jaccard": jac / n,
            "fscore": 2 * p * rc / (p + rc) if p + rc else 0.0,
            "precision": p,
            "recall": rc,
            "accuracy": (tp + tn) / (n * len(GENRES)),
        },
    }


def main():
    corpus, out = Path(sys.argv[1]), Path(sys.argv[2])
    records = [json.loads(l) for l in corpus.read_text().splitlines() if l.strip()]
    (out / "mini_corpus.stats.json").write_text(json.dumps(stats(records), indent=2) + "\n")
    (out / "top2_baseline.report.json").write_text(json.dumps(top2_report(records), indent=2) + "\n")


if __name__ == "__main__":
    main()
