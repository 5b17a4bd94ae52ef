"""Small synthetic datasets in the on-disk formats the loaders accept."""

import gzip
import random

from dca.ingest import KDD_COLUMNS

_ATTACKS = ["smurf.", "neptune.", "back.", "satan."]


def kdd_row(rng: random.Random, attack: bool):
    """One raw KDD Cup 99 record; attacks have heavier traffic counts."""
    out = []
    for name in KDD_COLUMNS[:-1]:
        if name == "protocol_type":
            out.append(rng.choice(["tcp", "udp", "icmp"]))
        elif name == "service":
            out.append(rng.choice(["http", "smtp", "ecr_i", "private"]))
        elif name == "flag":
            out.append(rng.choice(["SF", "S0", "REJ"]))
        elif name.endswith("rate"):
            base = 0.7 if attack else 0.1
            out.append(f"{min(1.0, max(0.0, rng.gauss(base, 0.15))):.2f}")
        elif name in ("count", "srv_count"):
            out.append(str(int(rng.uniform(200, 511) if attack else rng.uniform(0, 40))))
        else:
            out.append(str(int(rng.expovariate(1 / 50))) if rng.random() < 0.3 else "0")
    out.append(rng.choice(_ATTACKS) if attack else "normal.")
    return out


def write_kdd_like(path, n, seed=0, attack_share=0.6):
    rng = random.Random(seed)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as fh:
        for _ in range(n):
            fh.write(",".join(kdd_row(rng, rng.random() < attack_share)) + "\n")
    return path


def write_tiny_csv(path, rows, header=("f1", "f2", "f3", "label")):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return path
