"""Deliberately naive re-implementations used as test oracles.

Nothing here imports the engine or analysis code; each function follows the
update rules step by step, with explicit time-indexed histories.
"""

import random


def literal_dca(events, lifespans, csm_row=(2.0, 1.0, 2.0), k_row=(2.0, 1.0, -3.0), flush=False):
    """Run the population literally.

    ``events`` is a list of ``("antigen", id)`` / ``("signal", (p, d, s))``.
    Returns the output list of (antigen, k) tuples.
    """
    n = len(lifespans)
    I = {i: lifespans[i - 1] for i in range(1, n + 1)}
    K0 = {i: 0.0 for i in range(1, n + 1)}
    # histories indexed by time; t = 0 is initialisation
    F = {(0, i): I[i] for i in I}
    G = {(0, i): K0[i] for i in I}
    H = {i: [] for i in I}
    last = {i: 0 for i in I}  # time of the most recent value of F/G
    theta = 0
    lst = []
    for t, (kind, payload) in enumerate(events, start=1):
        if kind == "antigen":
            theta += 1
            idx = theta % n
            if idx == 0:
                idx = n
            H[idx] = H[idx] + [payload]
            continue
        csm = sum(w * x for w, x in zip(csm_row, payload))
        k = sum(w * x for w, x in zip(k_row, payload))
        for i in range(1, n + 1):
            f_prev = F[(last[i], i)]
            g_prev = G[(last[i], i)]
            if f_prev <= 0:
                F[(t, i)] = I[i] - csm
                G[(t, i)] = K0[i] + k
            else:
                F[(t, i)] = f_prev - csm
                G[(t, i)] = g_prev + k
            last[i] = t
            if F[(t, i)] <= 0 and t > 0:
                for a in H[i]:
                    lst.append((a, G[(t, i)]))
                H[i] = []
    if flush:
        for i in range(1, n + 1):
            for a in H[i]:
                lst.append((a, G[(last[i], i)]))
    return lst


def naive_scores(lst):
    """{alpha: (beta, gamma, K)} by scanning the whole list once per type."""
    types = []
    for a, _ in lst:
        if a not in types:
            types.append(a)
    out = {}
    for alpha in types:
        beta = 0
        gamma = 0.0
        for j in range(len(lst)):
            c = 1 if lst[j][0] == alpha else 0
            r = lst[j][1] if lst[j][0] == alpha else 0.0
            beta += c
            gamma += r
        out[alpha] = (beta, gamma, gamma / beta)
    return out


def random_stream(rng: random.Random, max_events=1000, n_antigen_types=20, s_max=100.0):
    length = rng.randint(0, max_events)
    p_antigen = rng.random()
    events = []
    for _ in range(length):
        if rng.random() < p_antigen:
            events.append(("antigen", rng.randrange(n_antigen_types)))
        else:
            events.append(("signal", tuple(rng.uniform(0, s_max) for _ in range(3))))
    return events


def random_pairs(rng: random.Random, max_pairs=1000, n_types=15):
    return [(rng.randrange(n_types), rng.uniform(-500, 500)) for _ in range(rng.randint(1, max_pairs))]
