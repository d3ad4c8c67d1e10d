"""Positive-page-rate verification of a module against a published class model."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .dumpio import DumpReader
from .errors import DomainError
from .features import extract_features, feature_order_fingerprint, group_pages
from .pagedata import DataPattern, PageDump
from .svdd import SvddModel, decide_many

DEFAULT_TEST_PAGES = 256
AUTHENTIC = "authentic"
COUNTERFEIT = "counterfeit"
REPORT_VERSION = 1


def compute_ppr(decisions: Iterable[bool]) -> float:
    d = [bool(x) for x in decisions]
    if not d:
        raise DomainError("cannot compute PPR of zero pages")
    return 100.0 * sum(d) / len(d)


@dataclass(frozen=True)
class ThresholdSelection:
    lambda_ppr: float
    ppr_neg_max: float | None = None

    @property
    def gap(self) -> float | None:
        if self.ppr_neg_max is None:
            return None
        return self.lambda_ppr - self.ppr_neg_max

    @property
    def separable(self) -> bool | None:
        """False when the worst negative reaches the threshold (overlapping PPR distributions)."""
        if self.ppr_neg_max is None:
            return None
        return self.ppr_neg_max < self.lambda_ppr


def select_threshold(positive_pprs: Sequence[float], ppr_neg_max: float | None = None) -> ThresholdSelection:
    """Operating threshold is the lowest PPR seen on known-genuine modules."""
    pprs = [float(p) for p in positive_pprs]
    if not pprs:
        raise DomainError("need at least one positive module PPR")
    return ThresholdSelection(min(pprs), None if ppr_neg_max is None else float(ppr_neg_max))


@dataclass(frozen=True)
class VerificationPolicy:
    lambda_ppr: float
    n_test_pages: int | None = DEFAULT_TEST_PAGES
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lambda_ppr <= 100.0:
            raise DomainError(f"lambda_ppr must be in [0, 100], got {self.lambda_ppr}")
        if self.n_test_pages is not None and self.n_test_pages < 1:
            raise DomainError("n_test_pages must be at least 1")


@dataclass(frozen=True)
class PageDecision:
    bank: int
    row: int
    distance2: float
    is_inside: bool


@dataclass
class VerificationReport:
    module_id: str
    class_tag: int
    pages_tested: int
    positives: int
    ppr: float
    lambda_ppr: float
    verdict: str
    seed: int
    feature_fingerprint: str
    pages: list[PageDecision] = field(default_factory=list)

    @property
    def authentic(self) -> bool:
        return self.verdict == AUTHENTIC

    def to_dict(self) -> dict:
        d = asdict(self)
        d["report_version"] = REPORT_VERSION
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        d = dict(d)
        d.pop("report_version", None)
        d["pages"] = [PageDecision(**p) for p in d.get("pages", [])]
        return cls(**d)

    def summary(self) -> str:
        lines = [
            f"module        {self.module_id}",
            f"model class   {self.class_tag}",
            f"pages tested  {self.pages_tested} (seed {self.seed})",
            f"positives     {self.positives}",
            f"PPR           {self.ppr:.2f}%",
            f"threshold     {self.lambda_ppr:.2f}%",
            f"verdict       {self.verdict.upper()}",
        ]
        return "\n".join(lines)


def _load_pages(dump) -> tuple[str | None, list[PageDump]]:
    """In-memory input: a ``(meta, pages)`` pair or a plain page sequence."""
    if isinstance(dump, tuple) and len(dump) == 2 and not isinstance(dump[0], PageDump):
        meta, pages = dump
        return meta.module_id, list(pages)
    pages = list(dump)
    return (pages[0].module_id if pages else None), pages


def complete_groups(pages: Iterable[PageDump]) -> dict[tuple[int, int], list[PageDump]]:
    full = set(DataPattern)
    return {k: g for k, g in group_pages(pages).items() if {p.pattern for p in g} == full and len(g) == 4}


class GroupSource:
    """Complete page groups of one module, decoded on demand.

    Dump files are indexed by page headers only; a group's payloads are read
    when it is requested, so memory stays bounded by the groups in use.
    """

    def __init__(self, dump):
        self._reader = None
        self._groups = None
        if isinstance(dump, (str, os.PathLike)):
            dump = DumpReader(dump)
        if isinstance(dump, DumpReader):
            self._reader = dump
            self.module_id = dump.meta.module_id
            buckets: dict[tuple[int, int], list[int]] = {}
            for i, (bank, row, _) in enumerate(dump.index()):
                buckets.setdefault((bank, row), []).append(i)
            full = set(DataPattern)
            index = dump.index()
            self._members = {k: ids for k, ids in buckets.items()
                             if len(ids) == 4 and {index[i][2] for i in ids} == full}
        else:
            self.module_id, pages = _load_pages(dump)
            self._groups = complete_groups(pages)
            self._members = self._groups

    def keys(self) -> list[tuple[int, int]]:
        return sorted(self._members)

    def groups(self, keys: Iterable[tuple[int, int]]) -> Iterator[tuple[tuple[int, int], list[PageDump]]]:
        keys = list(keys)
        if self._groups is not None:
            for k in keys:
                yield k, self._groups[k]
            return
        pages = self._reader.read_pages(i for k in keys for i in self._members[k])
        for k in keys:
            yield k, [next(pages) for _ in range(4)]


def sample_groups(keys: Sequence[tuple[int, int]], n: int | None, seed: int) -> list[tuple[int, int]]:
    """Seeded choice of ``n`` locations; depends only on the set of keys."""
    keys = sorted(keys)
    if n is None or n == len(keys):
        return keys
    if n > len(keys):
        raise DomainError(f"asked for {n} test pages but only {len(keys)} complete page groups exist")
    idx = np.random.default_rng(seed).choice(len(keys), size=n, replace=False)
    return [keys[i] for i in sorted(idx)]


def verify_module(dump, model: SvddModel, policy: VerificationPolicy) -> VerificationReport:
    fp = feature_order_fingerprint()
    if model.feature_fingerprint != fp:
        raise DomainError(f"model feature fingerprint {model.feature_fingerprint!r} does not match {fp!r}")
    source = GroupSource(dump)
    keys = source.keys()
    if not keys:
        raise DomainError("dump holds no complete page groups")
    chosen = sample_groups(keys, policy.n_test_pages, policy.seed)
    x = np.array([extract_features(g) for _, g in source.groups(chosen)])
    module_id = source.module_id
    d2, inside = decide_many(model, x)
    decisions = [PageDecision(b, r, float(d), bool(i)) for (b, r), d, i in zip(chosen, d2, inside)]
    ppr = compute_ppr(inside)
    return VerificationReport(
        module_id=module_id or "",
        class_tag=model.class_tag,
        pages_tested=len(decisions),
        positives=int(np.count_nonzero(inside)),
        ppr=ppr,
        lambda_ppr=float(policy.lambda_ppr),
        verdict=AUTHENTIC if ppr >= policy.lambda_ppr else COUNTERFEIT,
        seed=policy.seed,
        feature_fingerprint=fp,
        pages=decisions,
    )
