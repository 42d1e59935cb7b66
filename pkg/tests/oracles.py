"""Independent reference implementations used to check the library, written without reusing its code."""
import itertools
import math


def lcs_table(a, b):
    """Full O(n*m) LCS table; returns the LCS length."""
    n, m = len(a), len(b)
    t = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                t[i][j] = t[i - 1][j - 1] + 1
            else:
                t[i][j] = max(t[i - 1][j], t[i][j - 1])
    return t[n][m]


def rouge_l_oracle(p, r):
    if not p and not r:
        return 1.0
    if not p or not r:
        return 0.0
    lcs = lcs_table(p, r)
    if lcs == 0:
        return 0.0
    prec, rec = lcs / len(p), lcs / len(r)
    return 2 * prec * rec / (prec + rec)


def ngram_counts_bruteforce(cand, ref, n):
    """Clipped matches by scanning every candidate position against every reference position."""
    cand_grams = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
    ref_grams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    matches = 0
    for g in set(cand_grams):
        c = sum(1 for x in cand_grams if x == g)
        r = sum(1 for x in ref_grams if x == g)
        matches += min(c, r)
    return matches, len(cand_grams)


def multiset_f1(p, r):
    if not p and not r:
        return 1.0
    if not p or not r:
        return 0.0
    remaining = list(r)
    common = 0
    for tok in p:
        if tok in remaining:
            remaining.remove(tok)
            common += 1
    return 2 * common / (len(p) + len(r))


def bm25_straight(query, doc, docs, k1=1.2, b=0.75):
    """BM25 for one document, recomputing every statistic from scratch."""
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n
    score = 0.0
    for term in query:
        df = sum(1 for d in docs if term in d)
        idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
        f = doc.count(term)
        score += idf * f * (k1 + 1) / (f + k1 * (1 - b + b * len(doc) / avgdl))
    return score


def enumerate_optimum(space, value_fn):
    """Exhaustive argmax of ``value_fn`` over label dicts; ties go to the sorted-label-tuple minimum."""
    best, best_v = None, -math.inf
    for combo in itertools.product(*(d.values for d in space.dimensions)):
        labels = dict(zip(space.names, combo))
        v = value_fn(labels)
        key = tuple(sorted(labels.items()))
        if v > best_v + 1e-12 or (abs(v - best_v) <= 1e-12 and key < best[1]):
            best, best_v = (labels, key), v
    return best[0], best_v
