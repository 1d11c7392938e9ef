"""Micro-benchmark runner: timed updates and searches over a synthetic
workload, with per-search response sizes taken from the wire encoding.

Results aggregate into volume buckets (searches grouped by distinct
result count) so that response size and latency can be read as functions
of result volume; a flat size-per-volume relation is what volume hiding
looks like from the outside.  Reports serialize as JSON lines, one row
per search plus one summary row.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import client as cl
from . import workload as wl
from .audit import Transcript, _CapturingEdb
from .client import ClientConfig
from .edb import EncryptedDatabase


@dataclass
class SearchSample:
    keyword: str
    distinct: int
    seconds: float
    response_bytes: int


@dataclass
class BenchReport:
    spec: dict
    update_count: int
    update_seconds: float
    searches: list[SearchSample] = field(default_factory=list)

    @property
    def updates_per_second(self) -> float:
        if self.update_seconds == 0:
            return float("inf")
        return self.update_count / self.update_seconds

    def volume_buckets(self) -> list[dict]:
        buckets: dict[int, list[SearchSample]] = {}
        for s in self.searches:
            buckets.setdefault(s.distinct, []).append(s)
        out = []
        for distinct in sorted(buckets):
            group = buckets[distinct]
            out.append({
                "distinct": distinct,
                "searches": len(group),
                "mean_seconds": sum(s.seconds for s in group) / len(group),
                "mean_response_bytes":
                    sum(s.response_bytes for s in group) / len(group),
                "response_sizes": sorted({s.response_bytes for s in group}),
            })
        return out

    def rows(self) -> list[dict]:
        head = {"kind": "summary", "spec": self.spec,
                "updates": self.update_count,
                "update_seconds": self.update_seconds,
                "updates_per_second": self.updates_per_second}
        rows = [head]
        rows += [dict(kind="search", **asdict(s)) for s in self.searches]
        rows += [dict(kind="bucket", **b) for b in self.volume_buckets()]
        return rows

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r) for r in self.rows()) + "\n"

    def summary(self) -> str:
        lines = [f"{self.update_count} updates in "
                 f"{self.update_seconds:.3f}s "
                 f"({self.updates_per_second:,.0f}/s)"]
        for b in self.volume_buckets():
            lines.append(
                f"  volume {b['distinct']:6d}: {b['searches']:4d} searches, "
                f"mean {b['mean_seconds'] * 1e3:8.2f} ms, "
                f"mean response {b['mean_response_bytes']:10.0f} B")
        return "\n".join(lines)


def _config_for(spec: wl.WorkloadSpec) -> ClientConfig:
    depth = max(12, spec.updates.bit_length() + 1)
    return ClientConfig(bf_n=max(1024, 4 * spec.updates), bf_p=1e-4,
                        d_max=max(64, spec.updates), revoke_p=1e-2,
                        sigma_depth=depth)


def run(spec: wl.WorkloadSpec,
        config: Optional[ClientConfig] = None) -> BenchReport:
    config = config or _config_for(spec)
    state, _ = cl.setup(config)
    edb = _CapturingEdb(EncryptedDatabase(), Transcript())
    ops = wl.generate(spec)
    t0 = time.perf_counter()
    for kind, w, v in ops:
        cl.update(state, cl.ADD if kind == "add" else cl.DELETE, w, v, edb)
    update_seconds = time.perf_counter() - t0
    report = BenchReport(spec=asdict(spec), update_count=len(ops),
                         update_seconds=update_seconds)
    reference = wl.distinct_sets(ops)
    for i in range(spec.keywords):
        w = wl.keyword_name(i)
        if not reference.get(w):
            continue
        t0 = time.perf_counter()
        values = cl.search(state, w, edb)
        elapsed = time.perf_counter() - t0
        event = edb.transcript.events[-1]
        if values != reference[w]:
            raise AssertionError(f"search mismatch for {w!r}")
        report.searches.append(SearchSample(
            keyword=w.decode(), distinct=len(values), seconds=elapsed,
            response_bytes=len(event.response)))
    return report


def write_jsonl(report: BenchReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_jsonl())


def read_jsonl(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
