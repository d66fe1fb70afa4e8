"""Stratified record sampling with a per-condition cap, and record-level splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class SamplingConfig:
    quota: int = 10
    cap: int = 2
    seed: int = 0
    # per-department overrides of ``quota``
    quotas: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.quota < 1 or self.cap < 1 or any(q < 1 for q in self.quotas.values()):
            raise ValueError("quota and cap must be >= 1")

    def quota_for(self, department: str) -> int:
        return self.quotas.get(department, self.quota)


def _record_fields(r) -> tuple[str, str, str]:
    if isinstance(r, Mapping):
        return str(r["record_id"]), str(r.get("department", "")), str(r.get("condition", ""))
    record_id, department, condition = r
    return str(record_id), str(department), str(condition)


def stratified_sample(records: Iterable, config: SamplingConfig) -> list[str]:
    """Per department, take records in random order up to the quota, skipping
    any whose condition key has already been taken ``cap`` times.

    ``records`` holds ``(record_id, department, condition)`` triples or
    mappings with those keys. Input order does not matter.
    """
    rows = sorted({_record_fields(r) for r in records})
    by_dept: dict[str, list[tuple[str, str]]] = {}
    for record_id, dept, cond in rows:
        by_dept.setdefault(dept, []).append((record_id, cond))

    rng = np.random.default_rng(config.seed)
    selected = []
    for dept in sorted(by_dept):
        pool = by_dept[dept]
        quota = config.quota_for(dept)
        taken: dict[str, int] = {}
        n = 0
        for i in rng.permutation(len(pool)):
            if n >= quota:
                break
            record_id, cond = pool[i]
            if taken.get(cond, 0) >= config.cap:
                continue
            taken[cond] = taken.get(cond, 0) + 1
            selected.append(record_id)
            n += 1
    return sorted(selected)


def split_sizes(n: int, counts: Sequence[int] | None = None,
                ratios: Sequence[float] | None = None) -> tuple[int, int, int]:
    """Train/dev/test sizes.

    Explicit ``counts`` win; otherwise ``ratios`` are apportioned by largest
    remainder. With neither, 500 records give 300/100/100 and any other size
    uses 0.6/0.2/0.2.
    """
    if counts is not None:
        sizes = tuple(int(c) for c in counts)
    else:
        if ratios is None:
            if n == 500:
                return (300, 100, 100)
            ratios = (0.6, 0.2, 0.2)
        if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) > 1 + 1e-9:
            raise ValueError(f"bad split ratios {ratios}")
        exact = [r * n for r in ratios]
        base = [int(np.floor(x + 1e-9)) for x in exact]
        target = min(n, int(round(sum(exact))))
        order = sorted(range(3), key=lambda i: (-(exact[i] - base[i]), i))
        for i in order[:max(0, target - sum(base))]:
            base[i] += 1
        sizes = tuple(base)
    if len(sizes) != 3 or any(s < 0 for s in sizes):
        raise ValueError(f"bad split sizes {sizes}")
    if sum(sizes) > n:
        raise ValueError(f"split needs {sum(sizes)} records but only {n} are available")
    return sizes


def split(record_ids: Iterable[str], counts: Sequence[int] | None = None,
          ratios: Sequence[float] | None = None, seed: int = 0) -> tuple[list[str], list[str], list[str]]:
    """Disjoint train/dev/test record id lists, deterministic per seed."""
    ids = sorted(set(record_ids))
    n_train, n_dev, n_test = split_sizes(len(ids), counts, ratios)
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    train = sorted(shuffled[:n_train])
    dev = sorted(shuffled[n_train:n_train + n_dev])
    test = sorted(shuffled[n_train + n_dev:n_train + n_dev + n_test])
    return train, dev, test
