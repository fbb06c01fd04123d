"""Dataset manifest handling and the stratified 60:20:20 split.

Manifest CSV header: image_id,path,label,category,split. Labels follow the
package convention 0=GAN, 1=Graphics, 2=Real. Stratification is per
(label, category): each stratum is shuffled and cut to the ratios with
largest-remainder rounding, so every stratum lands within one image of the
exact proportions.
"""

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

SPLITS = ("train", "val", "test", "unassigned")
DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class ManifestRecord:
    image_id: int
    path: str
    label: int
    category: str
    split: str = "unassigned"

    def __post_init__(self):
        if self.label not in (0, 1, 2):
            raise ValueError("label must be 0, 1 or 2, got %r" % (self.label,))
        if self.split not in SPLITS:
            raise ValueError("unknown split %r" % (self.split,))


def read_manifest(path):
    records = []
    seen = set()
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    expected = ["image_id", "path", "label", "category", "split"]
    if reader.fieldnames != expected:
        raise ValueError("manifest header must be %s, got %s"
                         % (",".join(expected), reader.fieldnames))
    for row in reader:
        rec = ManifestRecord(int(row["image_id"]), row["path"], int(row["label"]),
                             row["category"], row["split"] or "unassigned")
        if rec.image_id in seen:
            raise ValueError("duplicate image_id %d" % rec.image_id)
        seen.add(rec.image_id)
        records.append(rec)
    return records


def write_manifest(path, records, header_lines=()):
    with open(path, "w", newline="") as f:
        for line in header_lines:
            f.write("# %s\n" % line)
        w = csv.writer(f)
        w.writerow(["image_id", "path", "label", "category", "split"])
        for r in records:
            w.writerow([r.image_id, r.path, r.label, r.category, r.split])


def _largest_remainder(n, ratios):
    quotas = [n * r for r in ratios]
    base = [int(q) for q in quotas]
    short = n - sum(base)
    # ties broken toward the earlier split (train first)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def split_dataset(records, ratios=DEFAULT_RATIOS, seed=0):
    """Assign train/val/test per (label, category) stratum.

    Strata smaller than 3 go wholly to train with a warning. Returns new
    records; the input list is left untouched.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ValueError("ratios must be three fractions summing to 1")
    for r in records:
        if r.split != "unassigned":
            raise ValueError("record %d already assigned to %r" % (r.image_id, r.split))
    strata = {}
    for i, r in enumerate(records):
        strata.setdefault((r.label, r.category), []).append(i)
    rng = np.random.default_rng(seed)
    out = list(records)
    for key in sorted(strata):
        idx = strata[key]
        if len(idx) < 3:
            warnings.warn("stratum %r has %d records; all assigned to train" % (key, len(idx)))
            for i in idx:
                out[i] = replace(records[i], split="train")
            continue
        perm = rng.permutation(len(idx))
        n_train, n_val, n_test = _largest_remainder(len(idx), ratios)
        for pos, j in enumerate(perm):
            if pos < n_train:
                split = "train"
            elif pos < n_train + n_val:
                split = "val"
            else:
                split = "test"
            out[idx[j]] = replace(records[idx[j]], split=split)
    return out
