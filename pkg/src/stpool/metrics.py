"""Displacement-error metrics and their aggregate report.

All functions operate on matched prediction/ground-truth trajectory lists and
reduce with fixed summation order so results do not depend on agent ordering
beyond the documented invariances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptySetError
from .representation import Trajectory

# Type weights of the aggregate challenge metric (vehicles, pedestrians,
# bicycles). These follow the displayed summation formula; see weighted_sums.
WEIGHTS = {"vehicle": 0.20, "pedestrian": 0.58, "bicycle": 0.22}


def _positions(traj) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.positions
    return np.asarray(traj, dtype=np.float64).reshape(-1, 2)


def _paired_errors(preds, gts) -> list[np.ndarray]:
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground truths")
    if len(preds) == 0:
        raise EmptySetError("no trajectories to score")
    errors = []
    for p, g in zip(preds, gts):
        pp, gg = _positions(p), _positions(g)
        if pp.shape != gg.shape:
            raise ValueError(f"trajectory shapes differ: {pp.shape} vs {gg.shape}")
        errors.append(np.linalg.norm(pp - gg, axis=1))
    return errors


def ade(preds, gts) -> float:
    """Mean Euclidean distance over all agents and all future steps."""
    errors = _paired_errors(preds, gts)
    return float(np.mean(np.concatenate(errors)))


def fde(preds, gts) -> float:
    """Mean Euclidean distance at the final step only."""
    errors = _paired_errors(preds, gts)
    return float(np.mean([e[-1] for e in errors]))


def weighted_sums(
    ade_v: float, ade_p: float, ade_b: float, fde_v: float, fde_p: float, fde_b: float
) -> tuple[float, float]:
    """Type-weighted aggregates: 0.20*vehicles + 0.58*pedestrians + 0.22*bicycles.

    The weight-to-type assignment follows the displayed summation formula
    (which reproduces the published aggregate columns), not the prose listing
    order that accompanies it.
    """
    for v in (ade_v, ade_p, ade_b, fde_v, fde_p, fde_b):
        if v < 0:
            raise ValueError("distance errors must be nonnegative")
    wsade = 0.20 * ade_v + 0.58 * ade_p + 0.22 * ade_b
    wsfde = 0.20 * fde_v + 0.58 * fde_p + 0.22 * fde_b
    return wsade, wsfde


def rmse_by_horizon(preds, gts, horizons) -> dict[float, float]:
    """RMSE of Euclidean error at the step closest to each horizon (seconds).

    Predictions must carry step times (Trajectory objects).
    """
    if len(preds) != len(gts) or len(preds) == 0:
        raise ValueError("need matched, nonempty prediction/ground-truth lists")
    out: dict[float, float] = {}
    for h in horizons:
        sq_sum = 0.0
        for p, g in zip(preds, gts):
            if not isinstance(p, Trajectory):
                raise ValueError("rmse_by_horizon needs Trajectory predictions with times")
            if h > p.times[-1] + 1e-9:
                raise ConfigError(
                    f"horizon {h}s is beyond the prediction horizon {p.times[-1]}s"
                )
            k = int(np.argmin(np.abs(p.times - h)))
            gg = _positions(g)
            sq_sum += float(np.sum((p.positions[k] - gg[k]) ** 2))
        out[float(h)] = float(np.sqrt(sq_sum / len(preds)))
    return out


def mon_metrics(sample_sets, gts, joint: bool = False) -> tuple[float, float]:
    """Minimum-over-N errors for a stochastic predictor.

    Per agent, the best of the N candidate trajectories is selected by ADE and
    (independently, unless ``joint``) by FDE; the selected errors are averaged
    over agents.
    """
    if len(sample_sets) != len(gts) or len(sample_sets) == 0:
        raise ValueError("need matched, nonempty sample sets and ground truths")
    ade_total = 0.0
    fde_total = 0.0
    for samples, gt in zip(sample_sets, gts):
        if len(samples) == 0:
            raise EmptySetError("agent with zero candidate trajectories")
        ades = [ade([s], [gt]) for s in samples]
        fdes = [fde([s], [gt]) for s in samples]
        best_ade_idx = int(np.argmin(ades))
        ade_total += ades[best_ade_idx]
        fde_total += fdes[best_ade_idx] if joint else min(fdes)
    n = len(sample_sets)
    return ade_total / n, fde_total / n


@dataclass
class TypeMetrics:
    ade: float
    fde: float
    count: int


@dataclass
class MetricReport:
    """Per-type and aggregate evaluation results.

    Weighted sums are present only when all three weighted types occur in the
    evaluation set; MoN fields only for stochastic predictors.
    """

    per_type: dict[str, TypeMetrics] = field(default_factory=dict)
    wsade: float | None = None
    wsfde: float | None = None
    rmse: dict[float, float] = field(default_factory=dict)
    mon_ade: float | None = None
    mon_fde: float | None = None

    @property
    def overall_ade(self) -> float:
        total = sum(m.ade * m.count for m in self.per_type.values())
        n = sum(m.count for m in self.per_type.values())
        return total / n

    @property
    def overall_fde(self) -> float:
        total = sum(m.fde * m.count for m in self.per_type.values())
        n = sum(m.count for m in self.per_type.values())
        return total / n

    def to_keyvalue_text(self) -> str:
        lines = []
        for name in sorted(self.per_type):
            m = self.per_type[name]
            lines.append(f"ade_{name}={m.ade!r}")
            lines.append(f"fde_{name}={m.fde!r}")
            lines.append(f"count_{name}={m.count}")
        lines.append(f"ade={self.overall_ade!r}")
        lines.append(f"fde={self.overall_fde!r}")
        if self.wsade is not None:
            lines.append(f"wsade={self.wsade!r}")
            lines.append(f"wsfde={self.wsfde!r}")
        for h in sorted(self.rmse):
            lines.append(f"rmse_{h:g}s={self.rmse[h]!r}")
        if self.mon_ade is not None:
            lines.append(f"mon_ade={self.mon_ade!r}")
            lines.append(f"mon_fde={self.mon_fde!r}")
        return "\n".join(lines) + "\n"

    def to_csv_rows(self) -> list[tuple[str, str, str, str]]:
        rows = [("metric", "agent_type", "horizon", "value")]
        for name in sorted(self.per_type):
            m = self.per_type[name]
            rows.append(("ade", name, "", repr(m.ade)))
            rows.append(("fde", name, "", repr(m.fde)))
            rows.append(("count", name, "", str(m.count)))
        rows.append(("ade", "all", "", repr(self.overall_ade)))
        rows.append(("fde", "all", "", repr(self.overall_fde)))
        if self.wsade is not None:
            rows.append(("wsade", "all", "", repr(self.wsade)))
            rows.append(("wsfde", "all", "", repr(self.wsfde)))
        for h in sorted(self.rmse):
            rows.append(("rmse", "all", f"{h:g}", repr(self.rmse[h])))
        if self.mon_ade is not None:
            rows.append(("mon_ade", "all", "", repr(self.mon_ade)))
            rows.append(("mon_fde", "all", "", repr(self.mon_fde)))
        return rows


def build_report(
    preds,
    gts,
    agent_types,
    horizons=(),
    sample_sets=None,
    joint_mon: bool = False,
) -> MetricReport:
    """Aggregate matched predictions into a MetricReport.

    ``agent_types`` gives the target type per scene; ``sample_sets`` (when the
    predictor is stochastic) supplies N candidates per scene for MoN.
    """
    report = MetricReport()
    by_type: dict[str, list[int]] = {}
    for i, t in enumerate(agent_types):
        by_type.setdefault(t, []).append(i)
    for name in sorted(by_type):
        idx = by_type[name]
        report.per_type[name] = TypeMetrics(
            ade=ade([preds[i] for i in idx], [gts[i] for i in idx]),
            fde=fde([preds[i] for i in idx], [gts[i] for i in idx]),
            count=len(idx),
        )
    if all(t in report.per_type for t in WEIGHTS):
        report.wsade, report.wsfde = weighted_sums(
            report.per_type["vehicle"].ade,
            report.per_type["pedestrian"].ade,
            report.per_type["bicycle"].ade,
            report.per_type["vehicle"].fde,
            report.per_type["pedestrian"].fde,
            report.per_type["bicycle"].fde,
        )
    if horizons:
        report.rmse = rmse_by_horizon(preds, gts, horizons)
    if sample_sets is not None:
        report.mon_ade, report.mon_fde = mon_metrics(sample_sets, gts, joint=joint_mon)
    return report
