"""Deal-group logs: parsing, filtering, splitting, negative sampling, synthesis."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import softmax

from .errors import DataError, ParseError, SamplingError, ValidationError

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class DealGroup:
    """One observed group buying: initiator, item, participants."""

    initiator: int
    item: int
    participants: tuple[int, ...]

    def __post_init__(self):
        if not self.participants:
            raise ValidationError("deal group has no participants")
        if len(set(self.participants)) != len(self.participants):
            raise ValidationError(f"duplicate participants in group {self}")
        if self.initiator in self.participants:
            raise ValidationError(f"initiator {self.initiator} listed among participants")

    @property
    def users(self) -> tuple[int, ...]:
        return (self.initiator, *self.participants)

    def format(self) -> str:
        return f"{self.initiator}\t{self.item}\t{','.join(map(str, self.participants))}"


def parse_line(line: str, lineno: int = 0) -> DealGroup:
    cols = line.rstrip("\r\n").split("\t")
    if len(cols) != 3:
        raise ParseError(f"line {lineno}: expected 3 tab-separated fields, got {len(cols)}")
    try:
        u = int(cols[0])
        i = int(cols[1])
        ps = tuple(int(p) for p in cols[2].split(",")) if cols[2].strip() else ()
    except ValueError:
        raise ParseError(f"line {lineno}: ids must be decimal integers: {line.strip()!r}") from None
    if u < 0 or i < 0 or any(p < 0 for p in ps):
        raise ParseError(f"line {lineno}: negative id")
    if not ps:
        raise ParseError(f"line {lineno}: empty participant set")
    try:
        return DealGroup(u, i, ps)
    except ValidationError as exc:
        raise ValidationError(f"line {lineno}: {exc}") from None


def parse_groups(path: str | Path) -> list[DealGroup]:
    groups = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            groups.append(parse_line(line, lineno))
    return groups


def write_groups(path: str | Path, groups: Iterable[DealGroup]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in groups:
            fh.write(g.format() + "\n")


# --------------------------------------------------------------------------- filtering

@dataclass
class FilterResult:
    groups: list[DealGroup]
    n_users: int
    n_items: int
    user_ids: list[int]  # position = new id, value = raw id
    item_ids: list[int]


def purchase_counts(groups: Sequence[DealGroup], initiator_only: bool = False) -> Counter:
    counts: Counter = Counter()
    for g in groups:
        counts[g.initiator] += 1
        if not initiator_only:
            counts.update(g.participants)
    return counts


def filter_and_reindex(groups: Sequence[DealGroup], min_interactions: int = 5,
                       initiator_only: bool = False) -> FilterResult:
    """Drop users below ``min_interactions`` purchases, then every group touching one.

    Counts are taken once on the raw corpus. Surviving users and items are
    renumbered densely in ascending raw-id order.
    """
    if min_interactions < 1:
        raise DataError(f"min_interactions must be >= 1, got {min_interactions}")
    counts = purchase_counts(groups, initiator_only)
    kept = [g for g in groups if all(counts[u] >= min_interactions for u in g.users)]
    if not kept:
        raise DataError(f"no groups survive filtering at threshold {min_interactions}")
    user_ids = sorted({u for g in kept for u in g.users})
    item_ids = sorted({g.item for g in kept})
    umap = {u: k for k, u in enumerate(user_ids)}
    imap = {i: k for k, i in enumerate(item_ids)}
    out = [DealGroup(umap[g.initiator], imap[g.item], tuple(umap[p] for p in g.participants))
           for g in kept]
    return FilterResult(out, len(user_ids), len(item_ids), user_ids, item_ids)


# --------------------------------------------------------------------------- splitting

def split(groups: Sequence[DealGroup], ratio: Sequence[int] = (7, 3, 1), seed: int = 0):
    """Shuffle whole groups and cut train/val/test by ``ratio``.

    Validation and test take the floor of their share; train keeps the rest.
    """
    if len(ratio) != 3 or any(r <= 0 for r in ratio):
        raise DataError(f"split ratio needs three positive parts, got {tuple(ratio)}")
    total = sum(ratio)
    n = len(groups)
    if n < total:
        raise DataError(f"cannot split {n} groups by ratio {tuple(ratio)}")
    n_val = n * ratio[1] // total
    n_test = n * ratio[2] // total
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    picked = [groups[k] for k in order]
    return picked[:n_train], picked[n_train:n_train + n_val], picked[n_train + n_val:]


# --------------------------------------------------------------------------- dataset

@dataclass
class Dataset:
    n_users: int
    n_items: int
    train: list[DealGroup]
    val: list[DealGroup] = field(default_factory=list)
    test: list[DealGroup] = field(default_factory=list)

    def __post_init__(self):
        for name in SPLIT_NAMES:
            for g in getattr(self, name):
                if not 0 <= g.item < self.n_items or any(not 0 <= u < self.n_users for u in g.users):
                    raise DataError(f"{name} group {g} references an id beyond "
                                    f"{self.n_users} users / {self.n_items} items")
        # exclusion sets span every split so no observed interaction becomes a negative
        self._initiated: dict[int, set[int]] = defaultdict(set)
        self._joined: dict[tuple[int, int], set[int]] = defaultdict(set)
        for g in self.all_groups():
            self._initiated[g.initiator].add(g.item)
            self._joined[(g.initiator, g.item)].update(g.participants)

    def all_groups(self) -> list[DealGroup]:
        return [*self.train, *self.val, *self.test]

    def split_groups(self, name: str) -> list[DealGroup]:
        if name not in SPLIT_NAMES:
            raise DataError(f"unknown split {name!r}")
        return getattr(self, name)

    def initiated_items(self, u: int) -> set[int]:
        return self._initiated.get(u, set())

    def participants_of(self, u: int, i: int) -> set[int]:
        """Every user that joined any group launched by ``u`` on item ``i``."""
        return self._joined.get((u, i), set())

    def stats(self) -> dict:
        return {"users": self.n_users, "items": self.n_items,
                "groups": len(self.train) + len(self.val) + len(self.test),
                "train": len(self.train), "val": len(self.val), "test": len(self.test)}

    @classmethod
    def from_groups(cls, groups: Sequence[DealGroup], min_interactions: int = 5,
                    ratio=(7, 3, 1), seed: int = 0, initiator_only: bool = False) -> "Dataset":
        core = filter_and_reindex(groups, min_interactions, initiator_only)
        tr, va, te = split(core.groups, ratio, seed)
        return cls(core.n_users, core.n_items, tr, va, te)

    def save(self, out_dir: str | Path, meta: dict | None = None) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name in SPLIT_NAMES:
            write_groups(out / f"{name}.txt", getattr(self, name))
        record = {"n_users": self.n_users, "n_items": self.n_items,
                  "counts": self.stats(), **(meta or {})}
        (out / "meta.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")

    @classmethod
    def load(cls, data_dir: str | Path) -> "Dataset":
        d = Path(data_dir)
        try:
            meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"no split manifest (meta.json) in {d}") from None
        parts = {name: parse_groups(d / f"{name}.txt") for name in SPLIT_NAMES}
        return cls(int(meta["n_users"]), int(meta["n_items"]), **parts)


# --------------------------------------------------------------------------- sampling

def _draw_excluding(n: int, excluded: set[int], k: int, rng: np.random.Generator, what: str) -> list[int]:
    """``k`` distinct ids from ``range(n)`` minus ``excluded``, uniformly at random."""
    eligible = n - sum(1 for x in excluded if 0 <= x < n)
    if eligible < k:
        raise SamplingError(f"{what}: only {eligible} eligible candidates, need {k}")
    if eligible < 2 * k:
        pool = np.setdiff1d(np.arange(n), np.fromiter(excluded, dtype=np.int64, count=len(excluded)))
        return [int(x) for x in rng.choice(pool, size=k, replace=False)]
    picked: list[int] = []
    seen = set(excluded)
    while len(picked) < k:
        for x in rng.integers(0, n, size=2 * (k - len(picked))):
            x = int(x)
            if x not in seen:
                seen.add(x)
                picked.append(x)
                if len(picked) == k:
                    break
    return picked


def sample_negatives_A(u: int, dataset: Dataset, k: int, rng: np.random.Generator) -> list[int]:
    """``k`` distinct items ``u`` never launched a group with."""
    return _draw_excluding(dataset.n_items, dataset.initiated_items(u), k, rng,
                           f"item negatives for initiator {u}")


def sample_negatives_B(u: int, i: int, G: Iterable[int], dataset: Dataset, k: int,
                       rng: np.random.Generator) -> list[int]:
    """``k`` distinct users outside ``G`` and different from ``u``."""
    excluded = set(G) | {u}
    return _draw_excluding(dataset.n_users, excluded, k, rng,
                           f"participant negatives for ({u}, {i})")


@dataclass
class AuxNegatives:
    """Corruptions of a positive triple: item-replaced and participant-replaced."""

    triple: tuple[int, int, int]
    items: list[int]
    participants: list[int]


def sample_item_replacements(t: tuple[int, int, int], dataset: Dataset, size: int,
                             rng: np.random.Generator) -> list[int]:
    return _draw_excluding(dataset.n_items, {t[1]}, size, rng, f"item replacements for {t}")


def sample_aux_negatives(t: tuple[int, int, int], dataset: Dataset, size: int,
                         rng: np.random.Generator) -> AuxNegatives:
    u, i, p = t
    items = sample_item_replacements(t, dataset, size, rng)
    parts = _draw_excluding(dataset.n_users, dataset.participants_of(u, i) | {p, u}, size, rng,
                            f"participant replacements for {t}")
    return AuxNegatives(t, items, parts)


# --------------------------------------------------------------------------- synthesis

def generate_synthetic(n_users: int, n_items: int, n_groups: int, latent_dim: int = 8,
                       seed: int = 0, max_participants: int = 5) -> list[DealGroup]:
    """Latent-factor corpus: items and participants drawn by softmax affinity."""
    if min(n_users, n_items, n_groups, latent_dim) <= 0:
        raise DataError("synthetic corpus sizes must be positive")
    if n_users < 2:
        raise DataError("need at least two users to form a group")
    rng = np.random.default_rng(seed)
    users = rng.standard_normal((n_users, latent_dim))
    items = rng.standard_normal((n_items, latent_dim))
    item_prefs = softmax(users @ items.T, axis=1)
    joiner_prefs = softmax(items @ users.T, axis=1)
    groups = []
    for _ in range(n_groups):
        u = int(rng.integers(n_users))
        i = int(rng.choice(n_items, p=item_prefs[u]))
        w = joiner_prefs[i].copy()
        w[u] = 0.0
        size = int(rng.integers(1, min(max_participants, n_users - 1) + 1))
        ps = rng.choice(n_users, size=size, replace=False, p=w / w.sum())
        groups.append(DealGroup(u, i, tuple(int(p) for p in ps)))
    return groups
