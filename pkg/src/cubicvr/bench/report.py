"""Compare traces on a common Hessian-sample grid."""

from __future__ import annotations

import csv
import glob as globmod
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ReportError(ValueError):
    """Traces cannot be compared (e.g. different objectives)."""


@dataclass
class Trace:
    path: Path
    algorithm: str
    seed: int
    objective_key: str
    n: int
    f_gap0: float
    cum_hess: np.ndarray
    f_gap: np.ndarray

    def gap_at(self, budgets) -> np.ndarray:
        """Piecewise-constant f_gap: last value with cum_hess <= budget."""
        idx = np.searchsorted(self.cum_hess, budgets, side="right") - 1
        vals = np.where(idx >= 0, self.f_gap[np.maximum(idx, 0)], self.f_gap0)
        return vals


@dataclass
class Report:
    budgets: np.ndarray
    medians: dict  # algorithm -> array over budgets
    n: int
    crossovers: dict = field(default_factory=dict)  # (a, b) -> first budget with a < b

    def to_rows(self) -> list[list]:
        algs = sorted(self.medians)
        rows = [["budget", "budget_per_n"] + algs]
        for j, b in enumerate(self.budgets):
            rows.append([int(b), b / self.n] + [float(self.medians[a][j]) for a in algs])
        return rows

    def to_text(self) -> str:
        rows = self.to_rows()
        head, body = rows[0], rows[1:]
        lines = ["  ".join(f"{h:>14}" for h in head)]
        for r in body:
            cells = [f"{r[0]:>14d}", f"{r[1]:>14.3g}"] + [f"{v:>14.6e}" for v in r[2:]]
            lines.append("  ".join(cells))
        for (a, b), at in sorted(self.crossovers.items()):
            where = "never" if at is None else f"{at} ({at / self.n:g} n)"
            lines.append(f"{a} below {b} from budget: {where}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="ascii") as fh:
            csv.writer(fh).writerows(self.to_rows())


def read_trace(path) -> Trace:
    path = Path(path)
    meta_path = path.with_name(path.name[: -len(".csv")] + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    cum = np.array([int(r["cum_hess_samples"]) for r in rows], dtype=np.int64)
    gap = np.array([float(r["f_gap"]) for r in rows])
    f0 = meta.get("f_initial")
    fref = meta.get("f_ref")
    gap0 = f0 - fref if f0 is not None and fref is not None else np.nan
    return Trace(
        path,
        meta.get("algorithm", path.stem.split("_seed")[0]),
        int(meta.get("seed", 0)),
        meta.get("objective_key", "?"),
        int(meta.get("n", 1)),
        gap0,
        cum,
        gap,
    )


def first_below(budgets, a: np.ndarray, b: np.ndarray):
    """First budget where curve a drops strictly below curve b."""
    hit = np.flatnonzero(a < b)
    return None if hit.size == 0 else int(budgets[hit[0]])


def parse_budgets(items, n: int) -> np.ndarray:
    """Budgets as absolute counts, or multiples of n with an ``n`` suffix."""
    out = []
    for item in items:
        s = str(item).strip()
        out.append(int(round(float(s[:-1]) * n)) if s.endswith("n") else int(float(s)))
    return np.array(sorted(set(out)), dtype=np.int64)


def build_report(traces: list[Trace], budgets=None) -> Report:
    if not traces:
        raise ReportError("no traces")
    keys = {t.objective_key for t in traces}
    if len(keys) > 1:
        raise ReportError(f"traces from different objectives: {sorted(keys)}")
    n = traces[0].n
    if budgets is None:
        top = max(int(t.cum_hess[-1]) for t in traces if t.cum_hess.size) if any(t.cum_hess.size for t in traces) else n
        budgets = np.arange(1, top // n + 1, dtype=np.int64) * n
        if budgets.size == 0:
            budgets = np.array([n])
    else:
        budgets = parse_budgets(budgets, n)
    by_alg: dict[str, list] = {}
    for t in traces:
        by_alg.setdefault(t.algorithm, []).append(t.gap_at(budgets))
    medians = {a: np.median(np.vstack(v), axis=0) for a, v in by_alg.items()}
    rep = Report(budgets, medians, n)
    for a in medians:
        for b in medians:
            if a != b:
                rep.crossovers[(a, b)] = first_below(budgets, medians[a], medians[b])
    return rep


def report_from_glob(pattern: str, budgets=None) -> Report:
    paths = sorted(globmod.glob(pattern))
    paths = [p for p in paths if p.endswith(".csv")]
    if not paths:
        raise ReportError(f"no trace CSVs match {pattern!r}")
    return build_report([read_trace(p) for p in paths], budgets)
