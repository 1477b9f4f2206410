"""One episode of the agent in GridPatch, producing the JSONL step rows.

Episode time: O_1 is the none symbol. At tick t the agent chooses A_t and
its result is O_{t+1} (the patch symbol after Observe, none otherwise). At
the start of tick t >= 2 the predictor learns (ctx_{t-1}, O_t) for one
compute token, giving theta_t; theta_0 = theta_1 = empty. The environment
advances every tick; non-Act kinds step it with stay.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from api.agent.controller import (
    AgentState,
    PolicyParams,
    act_control,
    affordable_kinds,
    choose_interface_action,
    featurize,
    private_symbol,
    search_plans,
    select_kind,
    write_private,
)
from api.agent.meta_actions import ACT, DELIBERATE, OBSERVE, WRITE, MetaAction, Schedule
from api.budget.ledger import Ledger, StepCosts, memory_cost, objective_J
from api.config.experiment import ExperimentConfig
from api.errors import EnumerationTooLargeError
from api.metrics.empowerment import empowerment_k
from api.model.predictor import (
    ContextKey,
    Segment,
    SnapshotRing,
    default_alphabet_size,
    empty_params,
    learning_progress,
    predictive_probability,
    stored_entries,
    update,
    update_magnitude,
)
from api.sim.gridpatch import (
    NONE_SYMBOL,
    STAY,
    ControlAction,
    LatencyBuffer,
    action_name,
    initial_state,
    observe,
    step_env,
    task_score,
)
from api.sim.interface import CapacityState, InterfaceAction, apply_interface_action
from api.sim.rng import EpisodeStreams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Decision:
    """A policy-sampled kind choice, kept for the score-function gradient."""

    features: np.ndarray
    mask: np.ndarray
    kind: int


@dataclass
class EpisodeResult:
    rows: list[dict]
    decisions: list[Decision] = field(default_factory=list)
    J: float = 0.0
    viability_exhausted: bool = False


def sample_empowerment(state, buffer: LatencyBuffer, b, cfg: ExperimentConfig) -> dict | None:
    """Empowerment at ``state`` in the configured modes, or None when the exact channel is over the cap.

    A None sample is recorded as skipped. Belief mode weights the latency
    buffer's states uniformly.
    """
    env = cfg.env
    k = cfg.metrics.empowerment_k
    modes = ["privileged", "belief"] if cfg.metrics.empowerment_mode == "both" else [cfg.metrics.empowerment_mode]
    belief = [(1.0, s) for s in buffer.states()] or [(1.0, state)]
    sample = {}
    try:
        for mode in modes:
            target = state if mode == "privileged" else belief
            sample[mode] = empowerment_k(target, k, b, env, mode=mode, cap=env.enumeration_cap)
    except EnumerationTooLargeError:
        logger.info(f"Skipping empowerment sample at tick {state.tick}: exact channel over the enumeration cap")
        return None
    return sample


def observe_focus(state, buffer: LatencyBuffer, b) -> tuple[int, int]:
    """Observe sub-policy: the avatar position in the state the agent is about to see."""
    if b.latency_ticks > 0:
        seen = buffer.lookup(state.tick - b.latency_ticks)
        if seen is not None:
            return seen.avatar_pos
    return state.avatar_pos


def run_episode(
    cfg: ExperimentConfig,
    seed: int,
    policy: PolicyParams | None = None,
    index: int = 0,
) -> EpisodeResult:
    """Run one episode under ``cfg.agent``'s controller and return its rows."""
    env = cfg.env
    agent_cfg = cfg.agent
    H = cfg.predictor.horizon
    depth = agent_cfg.deliberation_depth
    streams = EpisodeStreams(seed, index)

    state = initial_state(env, streams.env)
    b = env.bottleneck
    alphabet = cfg.predictor.alphabet_size or default_alphabet_size(env)
    theta0 = empty_params(cfg.predictor.alpha, alphabet, cfg.predictor.context_length)
    agent = AgentState(
        theta=theta0,
        capacity=CapacityState.from_bottleneck(b, env.compute_per_tick),
        bottleneck=b,
        memory=agent_cfg.memory,
        observations=[NONE_SYMBOL],
    )
    ring = SnapshotRing(H + 2)
    ring.push(0, theta0)
    ring.push(1, theta0)
    buffer = LatencyBuffer(b.latency_ticks)
    buffer.push(state)
    ledger = Ledger(caps=cfg.costs.caps)
    log_alphabet = math.log2(alphabet)
    write_allowed = agent_cfg.memory == "tape" and not agent_cfg.force_no_write and agent_cfg.tape_bandwidth > 0

    schedule = Schedule(pattern=agent_cfg.schedule) if agent_cfg.controller == "schedule" else None
    if schedule is None and policy is None:
        policy = PolicyParams.from_config(agent_cfg.initial_weights, agent_cfg.temperature)

    rows: list[dict] = []
    decisions: list[Decision] = []
    exhausted = False

    for t in range(1, cfg.episode_length + 1):
        # learning on (ctx_{t-1}, O_t)
        nll = None
        magnitude = 0.0
        update_tokens = 0
        if t >= 2:
            ctx = ContextKey.from_history(agent.observations[: t - 1], agent.actions[: t - 1], agent.theta.context_length)
            o_t = agent.observations[t - 1]
            nll = -math.log2(predictive_probability(agent.theta, ctx, o_t))
            agent.last_nll = nll / log_alphabet if log_alphabet > 0 else 0.0
            steps = cfg.predictor.update_steps if ledger.remaining("compute") >= 1 else 0
            new_theta = update(agent.theta, ctx, o_t, n_steps=steps)
            if new_theta is not agent.theta:
                update_tokens = 1
                magnitude = update_magnitude(new_theta, agent.theta)
            agent.theta = new_theta
            ring.push(t, agent.theta)

        mandatory = StepCosts(
            c_compute_tokens=update_tokens,
            c_memory=memory_cost(stored_entries(agent.theta) + len(agent.tape), cfg.costs.memory_coefficient),
        )
        if ledger.exceeded_channel(mandatory) is not None:
            logger.warning(f"Mandatory costs at tick {t} break the {ledger.exceeded_channel(mandatory)} cap; ending episode")
            exhausted = True
            break

        reward = 0.0
        if t > H:
            segment = Segment(
                observations=tuple(agent.observations[t - H - 1 : t]),
                actions=tuple(agent.actions[t - H - 1 : t - 1]),
            )
            reward = learning_progress(ring, segment, t, H)

        mask = affordable_kinds(agent, ledger, mandatory, env.move_energy, depth, write_allowed)
        features = featurize(
            agent, ledger, t, cfg.episode_length, agent_cfg.feature_mask, agent_cfg.tape_cap, agent_cfg.tape_alphabet
        )
        if schedule is not None:
            kind = schedule.kind_at(t)
            forced = not mask[kind]
        elif mask.any():
            kind = select_kind(policy, features, mask, streams.policy)
            decisions.append(Decision(features=features, mask=mask, kind=kind))
            forced = False
        else:
            kind, forced = ACT, True

        flags = {"truncated": False, "evicted": False, "saturated": False}
        energy_left = ledger.remaining("energy") - mandatory.c_energy
        compute_left = ledger.remaining("compute") - mandatory.c_compute_tokens
        if forced:
            logger.debug(f"Tick {t}: nothing affordable for the chosen kind, forced no-op")
            action = MetaAction.noop()
        elif kind == OBSERVE:
            action = MetaAction(kind=OBSERVE, focus=observe_focus(state, buffer, agent.bottleneck))
        elif kind == ACT:
            control = act_control(agent, streams.policy)
            interface = InterfaceAction.none()
            if agent_cfg.interface_policy == "greedy_info":
                move_cost = 0.0 if control == STAY else env.move_energy
                interface = choose_interface_action(
                    agent,
                    env,
                    env.catalogue,
                    cfg.costs.weights,
                    cfg.metrics.unification,
                    agent_cfg.interface_value,
                    energy_left - move_cost,
                    agent_cfg.tape_alphabet,
                    agent_cfg.tape_noise,
                )
            action = MetaAction(kind=ACT, control=ControlAction(control), interface=interface)
        elif kind == DELIBERATE:
            requested = min(agent.capacity.c_compute, agent_cfg.rollout_cap)
            plan = search_plans(
                agent, requested, depth, env.palette, compute_left, streams.policy, agent_cfg.task_proxy_weight
            )
            flags["truncated"] = plan.truncated
            action = MetaAction(kind=DELIBERATE, n_rollouts=plan.tokens // depth)
        else:
            symbol = private_symbol(agent.latest_patch or NONE_SYMBOL, agent_cfg.tape_alphabet)
            action = MetaAction(kind=WRITE, symbol=symbol)

        costs = mandatory + action.costs(env.move_energy, agent.bottleneck.token_count, depth)
        if not ledger.charge(t, costs, reward):
            logger.warning(f"Tick {t}: charge refused, replacing {action.letter} with a forced no-op")
            action = MetaAction.noop()
            costs = mandatory
            ledger.charge(t, costs, reward)

        # agent state changes only once the tick is paid for
        if action.kind == DELIBERATE and plan.tokens > 0:
            agent.plan = list(plan.plan)
        elif action.kind == WRITE:
            _, flags["evicted"] = write_private(
                agent, action.symbol, agent_cfg.tape_cap, agent_cfg.tape_alphabet, agent_cfg.tape_noise, streams.policy
            )

        empowerment = None
        if cfg.metrics.empowerment_every > 0 and (t - 1) % cfg.metrics.empowerment_every == 0:
            empowerment = sample_empowerment(state, buffer, agent.bottleneck, cfg)

        observation_in = agent.observations[t - 1]
        result_symbol = NONE_SYMBOL
        if action.kind == OBSERVE:
            obs = observe(state, action.focus, agent.bottleneck, streams.obs, env, buffer)
            result_symbol = obs.symbol
            agent.last_observe_tick = t
            if not obs.blank:
                agent.latest_patch = result_symbol

        if action.kind == ACT and action.interface.kind != "none":
            outcome = apply_interface_action(agent.capacity, agent.bottleneck, action.interface, env.catalogue, env.grid_size)
            agent.capacity, agent.bottleneck = outcome.capacity, outcome.bottleneck
            flags["saturated"] = outcome.saturated

        control_index = action.control.index if action.kind == ACT else STAY
        state = step_env(state, ControlAction(control_index), streams.env, env, agent.bottleneck)
        buffer.push(state)

        agent.actions.append(action.token(env.palette))
        agent.observations.append(result_symbol)
        agent.absorb(result_symbol, agent_cfg.latent_decay)

        b_now = agent.bottleneck
        rows.append(
            {
                "tick": t,
                "kind": action.letter,
                "forced_noop": action.forced_noop,
                "control": action_name(action.control.index, env.palette) if action.kind == ACT else None,
                "interface": action.interface.kind,
                "focus": list(action.focus) if action.focus is not None else None,
                "n_rollouts": action.n_rollouts,
                "symbol": action.symbol,
                **flags,
                "observation": observation_in,
                "result": result_symbol,
                "reward": float(reward),
                "nll": nll,
                "update_applied": update_tokens,
                "update_magnitude": float(magnitude),
                "c_obs_tokens": costs.c_obs_tokens,
                "c_energy": float(costs.c_energy),
                "c_compute_tokens": costs.c_compute_tokens,
                "c_memory": float(costs.c_memory),
                "c_obs": agent.capacity.c_obs,
                "c_act": agent.capacity.c_act,
                "c_compute": agent.capacity.c_compute,
                "coarsen_k": b_now.coarsen_k,
                "noise_eps": b_now.noise_eps,
                "latency_ticks": b_now.latency_ticks,
                "patch_radius": b_now.patch_radius,
                "action_cardinality": b_now.action_cardinality,
                "slip_prob": b_now.slip_prob,
                "tape_length": len(agent.tape),
                "task_score": task_score(state, env),
                "empowerment": empowerment,
                "empowerment_skipped": cfg.metrics.empowerment_every > 0
                and (t - 1) % cfg.metrics.empowerment_every == 0
                and empowerment is None,
            }
        )
        logger.debug(f"tick {t}: {action.letter} reward={reward:.4f} costs={costs.model_dump()}")

    J = objective_J(rows, cfg.costs.weights, intrinsic=cfg.costs.intrinsic_reward)
    return EpisodeResult(rows=rows, decisions=decisions, J=J, viability_exhausted=exhausted)


def run_fixed_schedule(sched: Schedule, cfg: ExperimentConfig, seed: int, index: int = 0) -> EpisodeResult:
    """Run the repeating pattern with the same masking and no-op fallback as the adaptive agent."""
    scheduled = cfg.model_copy(
        update={"agent": cfg.agent.model_copy(update={"controller": "schedule", "schedule": sched.pattern})}
    )
    return run_episode(scheduled, seed, index=index)
