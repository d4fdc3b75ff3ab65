"""Shared test fixtures and independent oracles.

The oracles deliberately use naive textbook formulations (full-matrix edit
distance, exhaustive split enumeration, per-element dot products) so they
stay independent of the implementations they check.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from amq.corpus import Dictionary, GoldQuery, GoldTerm, PreferredTerm
from amq.embeddings import EmbeddingStore

BASE_CODE = 10_000_000


# -- oracles ------------------------------------------------------------------


def levenshtein_oracle(a: str, b: str) -> int:
    """Full-matrix textbook edit distance."""
    m, n = len(a), len(b)
    dist = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        dist[i][0] = i
    for j in range(n + 1):
        dist[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dist[i][j] = min(
                dist[i - 1][j] + 1, dist[i][j - 1] + 1, dist[i - 1][j - 1] + cost
            )
    return dist[m][n]


def two_means_oracle(scores) -> tuple[float, int]:
    """Minimum SSE over every contiguous split of the sorted scores.

    Returns (min_sse, relevant_count_at_min) with ties resolved toward the
    larger upper cluster.
    """
    x = sorted(float(s) for s in scores)
    n = len(x)
    if x[0] == x[-1]:
        return 0.0, n

    def sse(values):
        mean = sum(values) / len(values)
        return sum((v - mean) ** 2 for v in values)

    best = None
    for k in range(1, n):
        total = sse(x[:k]) + sse(x[k:])
        if best is None or total < best[0] - 1e-15:
            best = (total, n - k)
    return best


def metrics_oracle(retrieved: set, gold: set) -> tuple[float, float, float]:
    """Set-intersection precision/recall/F1 with the zero conventions."""
    tp = len(retrieved & gold)
    p = tp / len(retrieved) if retrieved else 0.0
    r = tp / len(gold) if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def pearson_oracle(x, y) -> float:
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = (sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y)) ** 0.5
    return num / den


# -- small corpus builders ------------------------------------------------------


def make_dictionary(names: list[str], base: int = BASE_CODE) -> Dictionary:
    return Dictionary(
        terms=[PreferredTerm(code=base + i, name=name) for i, name in enumerate(names)]
    )


def write_dictionary_tsv(path: Path, rows: list[tuple[int, str, str]]) -> Path:
    lines = ["code\tname\tgroup"] + [f"{c}\t{n}\t{g}" for c, n, g in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_gold_json(path: Path, queries: list[dict]) -> Path:
    path.write_text(json.dumps(queries, indent=2), encoding="utf-8")
    return path


# -- planted embedding fixtures -------------------------------------------------
#
# Clusters are built around mutually orthogonal basis directions, with the
# off-axis spread confined to a tail subspace that no probe direction
# touches. Cosines to a cluster's probe are then exact by construction:
# members score their planted coefficient, everything else scores 0.


def _tail_unit(rng: np.random.Generator, dim: int, tail_start: int) -> np.ndarray:
    w = np.zeros(dim)
    tail = rng.normal(size=dim - tail_start)
    w[tail_start:] = tail / np.linalg.norm(tail)
    return w


def planted_fixture(
    n_queries: int = 50,
    members: int = 10,
    dim: int = 64,
    seed: int = 7,
    member_cos: tuple[float, float] = (0.905, 0.98),
    scopes: str = "narrow",
) -> tuple[Dictionary, EmbeddingStore, list[GoldQuery]]:
    """n_queries clusters of ``members`` gold terms each.

    Per cluster: one seed term exactly on the cluster axis (the query text
    equals its name, so the probe is that axis) and members-1 neighbors at
    planted cosine within ``member_cos``. Cross-cluster cosines are 0.
    """
    assert dim > n_queries, "need tail dimensions beyond the cluster axes"
    rng = np.random.default_rng(seed)
    terms: list[PreferredTerm] = []
    vectors: dict[int, np.ndarray] = {}
    gold: list[GoldQuery] = []

    for q in range(n_queries):
        axis = np.zeros(dim)
        axis[q] = 1.0
        codes: list[int] = []
        seed_code = BASE_CODE + q * 100
        seed_name = f"planted concept {q:03d}"
        terms.append(PreferredTerm(code=seed_code, name=seed_name))
        vectors[seed_code] = axis
        codes.append(seed_code)
        for i in range(1, members):
            c = rng.uniform(*member_cos)
            vec = c * axis + np.sqrt(1.0 - c * c) * _tail_unit(rng, dim, n_queries)
            code = seed_code + i
            terms.append(PreferredTerm(code=code, name=f"planted concept {q:03d} neighbor {i:02d}"))
            vectors[code] = vec
            codes.append(code)
        gold.append(
            GoldQuery(
                query_id=f"Q{q:03d}",
                name=f"planted concept {q:03d}",
                input_terms=(seed_name,),
                gold_terms=tuple(GoldTerm(code=c, scope=scopes) for c in codes),
            )
        )
    dictionary = Dictionary(terms=terms)
    store = EmbeddingStore.from_vectors(vectors)
    return dictionary, store, gold


def narrow_broad_fixture(
    n_queries: int = 10,
    dim: int = 40,
    seed: int = 11,
    narrow_cos: tuple[float, float] = (0.80, 0.92),
    broad_cos: tuple[float, float] = (0.55, 0.72),
    distractor_cos: tuple[float, float] = (0.40, 0.62),
) -> tuple[Dictionary, EmbeddingStore, list[GoldQuery]]:
    """Clusters whose narrow gold sits strictly closer to the probe than the
    broad gold, plus non-gold near-distractors that depress precision at
    low cut-offs."""
    assert dim > n_queries
    rng = np.random.default_rng(seed)
    terms: list[PreferredTerm] = []
    vectors: dict[int, np.ndarray] = {}
    gold: list[GoldQuery] = []

    def plant(axis: np.ndarray, c: float) -> np.ndarray:
        return c * axis + np.sqrt(1.0 - c * c) * _tail_unit(rng, dim, n_queries)

    for q in range(n_queries):
        axis = np.zeros(dim)
        axis[q] = 1.0
        base = BASE_CODE + q * 100
        seed_name = f"shift concept {q:03d}"
        gold_terms = [GoldTerm(code=base, scope="narrow")]
        terms.append(PreferredTerm(code=base, name=seed_name))
        vectors[base] = axis
        for i in range(1, 6):
            code = base + i
            terms.append(PreferredTerm(code=code, name=f"shift concept {q:03d} narrow {i}"))
            vectors[code] = plant(axis, rng.uniform(*narrow_cos))
            gold_terms.append(GoldTerm(code=code, scope="narrow"))
        for i in range(6, 10):
            code = base + i
            terms.append(PreferredTerm(code=code, name=f"shift concept {q:03d} broad {i}"))
            vectors[code] = plant(axis, rng.uniform(*broad_cos))
            gold_terms.append(GoldTerm(code=code, scope="broad"))
        for i in range(10, 13):  # non-gold distractors
            code = base + i
            terms.append(PreferredTerm(code=code, name=f"shift concept {q:03d} distractor {i}"))
            vectors[code] = plant(axis, rng.uniform(*distractor_cos))
        gold.append(
            GoldQuery(
                query_id=f"S{q:03d}",
                name=seed_name,
                input_terms=(seed_name,),
                gold_terms=tuple(gold_terms),
            )
        )
    return Dictionary(terms=terms), EmbeddingStore.from_vectors(vectors), gold
