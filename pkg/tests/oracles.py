"""Independent reference implementations used by the test suite.

These deliberately re-derive expected values by brute force so the paths they
check cannot share bugs with the implementations under test.
"""

import itertools
from fractions import Fraction

from triplex.metrics import _pair_fracs


def brute_force_tuple_scores(golds, preds):
    """Enumerate every injective gold-to-prediction mapping and return the
    (precision, recall) of the lexicographic maximum of
    (sum pair_f1, sum pair_precision, sum pair_recall)."""
    n, m = len(golds), len(preds)
    if n == 0 and m == 0:
        return 1.0, 1.0
    table = [[_pair_fracs(g, p) for p in preds] for g in golds]
    best = (Fraction(0), Fraction(0), Fraction(0))
    for size in range(min(n, m) + 1):
        for gsel in itertools.combinations(range(n), size):
            for psel in itertools.permutations(range(m), size):
                sf = sp = sr = Fraction(0)
                for a, b in zip(gsel, psel):
                    pr, rc, f1 = table[a][b]
                    sf += f1
                    sp += pr
                    sr += rc
                if (sf, sp, sr) > best:
                    best = (sf, sp, sr)
    prec = float(best[1] / m) if m else 0.0
    rec = float(best[2] / n) if n else 0.0
    return prec, rec


def brute_force_multi_recall(golds, preds):
    """Mean over golds of the best pair recall against any prediction."""
    if not golds:
        return 0.0
    total = Fraction(0)
    for g in golds:
        total += max((_pair_fracs(g, p)[1] for p in preds), default=Fraction(0))
    return float(total / len(golds))
