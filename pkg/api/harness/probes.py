"""Hypothesis probes H1-H5.

Each probe runs its experiments and reports which way the evidence points.
Reports describe a direction; they never accept or reject a hypothesis.
"""

import logging
import math

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from api.agent.training import train_policy
from api.config.experiment import ExperimentConfig, override
from api.errors import UnknownProbeError
from api.harness.compare import bootstrap_interval, compare_policies
from api.harness.runner import run_experiment
from api.metrics.unification import interface_unification
from api.sim.interface import (
    INTERFACE_KINDS,
    BottleneckConfig,
    CapacityState,
    InterfaceAction,
    apply_interface_action,
)
from api.sim.rng import make_stream

logger = logging.getLogger(__name__)

PROBE_IDS = ("H1", "H2", "H3", "H4", "H5")


class ProbeReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    probe: str
    question: str
    direction: str
    rows: list[dict]
    details: dict = {}
    notes: list[str] = []

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def correlation(xs: list[float], ys: list[float]) -> float | None:
    """Pearson correlation, or None when either side is constant or too short."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def direction_of(value: float | None, tol: float = 1e-12) -> str:
    if value is None or not math.isfinite(value):
        return "undetermined"
    if value > tol:
        return "positive"
    if value < -tol:
        return "negative"
    return "flat"


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def _mean_empowerment(summary) -> float | None:
    per_seed = [_mean(s.empowerment_samples) for s in summary.per_seed]
    per_seed = [v for v in per_seed if v is not None]
    return _mean(per_seed)


def probe_h1(cfg: ExperimentConfig) -> ProbeReport:
    """Across bottleneck interventions, does a learning-progress gain come with an empowerment gain?"""
    rows = []
    for patch in cfg.probes.h1_interventions:
        run_cfg = override(cfg, {"env": {"bottleneck": patch}})
        summary = run_experiment(run_cfg, write=False)
        rows.append(
            {
                "intervention": patch,
                "mean_learning_progress": summary.mean_learning_progress,
                "mean_empowerment": _mean_empowerment(summary),
            }
        )

    base = rows[0]
    usable = [r for r in rows if r["mean_empowerment"] is not None and base["mean_empowerment"] is not None]
    for r in rows:
        r["delta_learning_progress"] = r["mean_learning_progress"] - base["mean_learning_progress"]
        r["delta_empowerment"] = (
            r["mean_empowerment"] - base["mean_empowerment"] if r in usable else None
        )
    rho = correlation(
        [r["delta_learning_progress"] for r in usable[1:]],
        [r["delta_empowerment"] for r in usable[1:]],
    )
    notes = []
    if len(usable) < len(rows):
        notes.append("interventions without empowerment samples are left out of the correlation")
    return ProbeReport(
        probe="H1",
        question="Do interventions that improve learning progress also improve empowerment?",
        direction=direction_of(rho),
        rows=rows,
        details={"correlation": rho, "baseline": base["intervention"]},
        notes=notes,
    )


def _only_offer(cfg: ExperimentConfig, kind: str, price: float | None) -> dict:
    catalogue = cfg.env.catalogue
    for other in INTERFACE_KINDS[1:]:
        catalogue = catalogue.with_price(other, price if other == kind else None)
    return catalogue.model_dump(mode="json")


def upgrade_oracle(cfg: ExperimentConfig, price: float | None, kind: str | None = None) -> dict:
    """Enumerate the two-tick decision: tick 1 buys ``kind`` or not, tick 2 observes.

    Each branch is valued by the greedy_info criterion (interface_value times
    unification after tick 1) less its discounted lambda-weighted costs. A
    ``None`` price removes the buy branch.
    """
    kind = kind or cfg.probes.h2_kind
    env = override(cfg, {"env": {"bottleneck": {"noise_eps": cfg.probes.h2_noise}}}).env
    w = cfg.costs.weights
    agent = cfg.agent

    def value(b: BottleneckConfig, paid: float) -> float:
        u = interface_unification(
            b, env, agent.memory, agent.tape_alphabet, agent.tape_noise, cfg.metrics.unification, env.enumeration_cap
        )
        return agent.interface_value * u - w.lambda_E * paid - w.gamma * w.lambda_O * b.token_count

    b0 = env.bottleneck
    branches = {"skip": value(b0, 0.0)}
    if price is not None:
        catalogue = env.catalogue.with_price(kind, price)
        outcome = apply_interface_action(
            CapacityState.from_bottleneck(b0, env.compute_per_tick),
            b0,
            InterfaceAction(kind=kind, price=price),
            catalogue,
            env.grid_size,
        )
        branches["buy"] = value(outcome.bottleneck, outcome.cost)
    best = max(branches, key=lambda k: (branches[k], k == "skip"))
    strict = len(branches) == 2 and branches["buy"] != branches["skip"]
    return {"price": price, "values": branches, "best": best if strict or len(branches) == 1 else "tie"}


def probe_h2(cfg: ExperimentConfig) -> ProbeReport:
    """Upgrade-purchase rate against price, with the unification each price ends at."""
    kind = cfg.probes.h2_kind
    base = override(
        cfg,
        {
            "env": {"bottleneck": {"noise_eps": cfg.probes.h2_noise}},
            "agent": {"interface_policy": "greedy_info"},
        },
    )
    rows = []
    for price in cfg.probes.h2_prices:
        run_cfg = override(base, {"env": {"catalogue": _only_offer(base, kind, price)}})
        summary = run_experiment(run_cfg, write=False)
        bought = [s.purchases > 0 for s in summary.per_seed]
        rows.append(
            {
                "price": price,
                "purchase_rate": sum(bought) / len(bought),
                "mean_purchases": float(np.mean([s.purchases for s in summary.per_seed])),
                "mean_unification": summary.mean_unification,
                "mean_J": summary.mean_J,
                "oracle_best": upgrade_oracle(cfg, price, kind)["best"],
            }
        )

    # None is an unavailable upgrade, i.e. an infinite price
    ordered = sorted(rows, key=lambda r: math.inf if r["price"] is None else r["price"])
    violations = [
        {"price": b["price"], "rate": b["purchase_rate"], "previous_price": a["price"], "previous_rate": a["purchase_rate"]}
        for a, b in zip(ordered, ordered[1:])
        if b["purchase_rate"] > a["purchase_rate"]
    ]
    for v in violations:
        logger.warning(f"H2: purchase rate rises from {v['previous_rate']} to {v['rate']} at price {v['price']}")
    finite = [r for r in ordered if r["price"] is not None]
    rho = correlation([r["price"] for r in finite], [r["purchase_rate"] for r in finite])
    return ProbeReport(
        probe="H2",
        question="Does the agent spend budget to widen its interfaces, less so as prices rise?",
        direction=direction_of(rho),
        rows=ordered,
        details={"kind": kind, "price_rate_correlation": rho, "monotone_non_increasing": not violations},
        notes=[f"monotonicity violation at price {v['price']}" for v in violations],
    )


def _h3_rows(cfg: ExperimentConfig, intrinsic: bool) -> list[dict]:
    rows = []
    for scale in cfg.probes.h3_cost_scales:
        weights = cfg.costs.weights.scaled(scale).model_dump(mode="json")
        run_cfg = override(cfg, {"costs": {"weights": weights, "intrinsic_reward": intrinsic}})
        summary = run_experiment(run_cfg, write=False)
        rows.append(
            {
                "cost_scale": scale,
                "intrinsic_reward": intrinsic,
                "mean_plasticity": float(np.mean([s.plasticity for s in summary.per_seed])),
                "mean_update_magnitude": float(
                    np.mean([np.mean(s.update_magnitudes) if s.update_magnitudes else 0.0 for s in summary.per_seed])
                ),
                "mean_compute_tokens": float(np.mean([s.totals["c_compute_tokens"] for s in summary.per_seed])),
                "mean_J": summary.mean_J,
            }
        )
    return rows


def probe_h3(cfg: ExperimentConfig) -> ProbeReport:
    """Plasticity and update magnitude as cost weights tighten."""
    rows = _h3_rows(cfg, cfg.costs.intrinsic_reward)
    if cfg.probes.h3_intrinsic_off and cfg.costs.intrinsic_reward:
        rows += _h3_rows(cfg, False)

    details = {}
    for intrinsic in sorted({r["intrinsic_reward"] for r in rows}):
        subset = [r for r in rows if r["intrinsic_reward"] == intrinsic]
        key = "with_intrinsic" if intrinsic else "without_intrinsic"
        details[key] = {
            "plasticity_vs_cost": correlation([r["cost_scale"] for r in subset], [r["mean_plasticity"] for r in subset]),
            "update_magnitude_vs_cost": correlation(
                [r["cost_scale"] for r in subset], [r["mean_update_magnitude"] for r in subset]
            ),
        }
    primary = details["with_intrinsic" if cfg.costs.intrinsic_reward else "without_intrinsic"]
    notes = []
    if cfg.agent.controller != "adaptive" or cfg.agent.training.iterations == 0:
        notes.append("cost weights enter J only; without training the policy cannot react to them")
    return ProbeReport(
        probe="H3",
        question="Do tighter costs reduce plasticity and update magnitude?",
        direction=direction_of(primary["plasticity_vs_cost"]),
        rows=rows,
        details=details,
        notes=notes,
    )


def probe_h4(cfg: ExperimentConfig) -> ProbeReport:
    """Adaptive meta-control against the best of the fixed schedule family at equal budget."""
    schedules = list(cfg.probes.h4_schedules)
    report = compare_policies(cfg, ["adaptive", *schedules], baseline="adaptive")
    frame = pd.DataFrame(report.per_seed)
    schedule_arms = [a for a in report.arms if a.arm != "adaptive"]
    best = max(schedule_arms, key=lambda a: a.mean_J)

    adaptive_J = frame[frame["arm"] == "adaptive"].sort_values("seed")["J"].to_numpy()
    best_J = frame[frame["arm"] == best.arm].sort_values("seed")["J"].to_numpy()
    diff = adaptive_J - best_J
    rng = make_stream(cfg.bootstrap.seed, "bootstrap", len(report.arms))
    low, high = bootstrap_interval(diff, cfg.bootstrap.resamples, cfg.bootstrap.confidence, rng)

    if low > 0:
        outcome = "gain over the best schedule"
    elif high < 0:
        outcome = "best schedule ahead"
    else:
        outcome = "no gain over tuned static schedules"
    return ProbeReport(
        probe="H4",
        question="Does meta-control beat fixed observe/act/deliberate schedules at equal budget?",
        direction=direction_of(float(diff.mean())),
        rows=[a.model_dump() for a in report.arms],
        details={
            "best_schedule": best.arm,
            "mean_difference": float(diff.mean()),
            "ci_low": low,
            "ci_high": high,
            "outcome": outcome,
            "n_seeds": len(diff),
        },
    )


def probe_h5(cfg: ExperimentConfig) -> ProbeReport:
    """Explicit private tape against latent-only recurrence at matched compute."""
    latent = override(cfg, {"agent": {"memory": "latent"}})
    tape = override(cfg, {"agent": {"memory": "tape", "force_no_write": False}})
    report = compare_policies(cfg, [latent, tape])

    threshold = cfg.probes.h5_threshold
    per_updates = cfg.agent.training.episodes_per_update
    rows = []
    for arm, arm_cfg in zip(report.arms, (latent, tape)):
        reach = []
        if arm_cfg.agent.controller == "adaptive" and arm_cfg.agent.training.iterations > 0:
            for seed in arm_cfg.seeds:
                reach.append(train_policy(arm_cfg, seed).episodes_to_threshold(threshold, per_updates))
        rows.append(
            {
                "memory": arm_cfg.agent.memory,
                "mean_J": arm.mean_J,
                "mean_difference": arm.mean_difference,
                "ci_low": arm.ci_low,
                "ci_high": arm.ci_high,
                "share_W": arm.allocation["W"],
                "episodes_to_threshold": reach,
            }
        )
    tape_row = rows[1]
    return ProbeReport(
        probe="H5",
        question="Do private tape tokens help over latent-only recurrence at matched compute?",
        direction=direction_of(tape_row["mean_difference"]),
        rows=rows,
        details={"threshold": threshold},
        notes=[f"the episodes-to-threshold criterion uses an arbitrary threshold J >= {threshold}"],
    )


PROBES = {"H1": probe_h1, "H2": probe_h2, "H3": probe_h3, "H4": probe_h4, "H5": probe_h5}


def hypothesis_probe(cfg: ExperimentConfig, probe_id: str) -> ProbeReport:
    probe = PROBES.get(probe_id.upper())
    if probe is None:
        logger.error(f"Unknown probe id: {probe_id}")
        raise UnknownProbeError(f"Unknown probe id {probe_id!r}; expected one of {', '.join(PROBE_IDS)}")
    logger.info(f"Running probe {probe_id.upper()} for {cfg.name!r}")
    return probe(cfg)
