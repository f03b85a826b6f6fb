"""Forward simulation of the N-agent system under any policy family.

Episodes run in rounds of the game horizon T: predictions are
re-initialized at the observed target at each round start, the policy
coefficients are re-solved on the round's target slice, and the spawner
(when enabled) acts between rounds. The greedy baseline and the
score-based aggregation keep their windows across round boundaries (they
are plain online mechanisms and know nothing about rounds).

Costs are reported as sample-path evaluations of the game objective;
Monte-Carlo means over seeds are left to the caller.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import DatasetSpec, build_dataset
from .encoders import (
    HARD_SIGMOID,
    esn_encode,
    rfn_encode,
    sample_esn_params,
    sample_rfn_params,
)
from .errors import DynamicsError
from .model import GameParams, SampleBank, TargetSeries, estimate_moments
from .nash_full import full_action, full_backward_pass
from .nash_meanfield import (
    decentralized_action,
    decentralized_backward_pass,
    meanfield_forward,
)
from .nash_reduced import reduced_action, reduced_backward_pass
from .pool import AgentPool, flatten_encoder, unflatten_encoder
from .ridge import RidgeConfig, ridge_action
from .spawner import build_ortho_problem, ortho_solve, resample_parameters, score_agents

logger = logging.getLogger(__name__)

POLICIES = ("full", "reduced", "decentralized", "greedy")

# Per-step message model: centralized policies gather and scatter all N
# predictions; the greedy baseline gathers N and broadcasts one mean; the
# decentralized policy exchanges nothing per step (one sync per round).
MESSAGES_PER_STEP = {
    "full": lambda n: 2 * n,
    "reduced": lambda n: 2 * n,
    "greedy": lambda n: n + 1,
    "decentralized": lambda n: 0,
}


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "rfn"  # rfn | esn
    sigma: float = 0.1
    activation: str = HARD_SIGMOID

    def __post_init__(self):
        if self.kind not in ("rfn", "esn"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")


@dataclass(frozen=True)
class SpawnerConfig:
    retire_k: int
    lam: float = 1.0
    sigma_t: float = 0.1
    zeta1: float = 0.0
    zeta2: float = 0.0
    orthogonalize: bool = False


@dataclass(frozen=True)
class Scenario:
    params: GameParams
    dataset: DatasetSpec
    encoder: EncoderConfig = EncoderConfig()
    mc_samples: int = 100
    ridge: RidgeConfig | None = None
    aggregation_alpha: float = 0.2
    aggregation_window: int = 1
    spawner: SpawnerConfig | None = None


@dataclass
class RunRecord:
    """Everything recorded over one seeded episode."""

    policy: str
    seed: int
    targets: np.ndarray  # (L, d_y)
    predictions: np.ndarray  # (rounds, T+1, N, d_y)
    actions: np.ndarray  # (rounds, T, N, d_z)
    aggregated: np.ndarray  # (rounds, T, d_y) prediction of y_{t+1}
    agg_weights: np.ndarray  # (rounds, T, N)
    costs: np.ndarray  # (N,) per-agent total objective
    costs_per_round: np.ndarray  # (rounds, N)
    regret: float
    rmse_aggregated: float
    rmse_worst: float
    rmse_bottom20: float
    messages_per_step: int
    runtime_ms: float = 0.0
    spawn_events: list = field(default_factory=list)


def step_dynamics(
    predictions: np.ndarray,
    latents: np.ndarray,
    actions: np.ndarray,
    params: GameParams,
) -> np.ndarray:
    """One prediction update: Y' = theta Y + theta_bar mean(Y) + Z beta."""
    preds = np.asarray(predictions, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if actions.shape[0] != preds.shape[0]:
        raise ValueError("one action per agent required")
    mean = preds.mean(axis=0)
    out = (
        preds @ params.theta.T
        + np.tile(mean @ params.theta_bar.T, (preds.shape[0], 1))
        + np.einsum("nij,nj->ni", latents, actions)
    )
    bad = ~np.all(np.isfinite(out), axis=1)
    if np.any(bad):
        raise DynamicsError(f"non-finite prediction for agent {int(np.flatnonzero(bad)[0])}")
    return out


def _round_cost(record: RunRecord, r: int, agent_n: int, params: GameParams, values) -> float:
    T = params.horizon_T
    base = r * T
    total = 0.0
    for t in range(T):
        disc = params.discount(t)
        pred = record.predictions[r, t + 1, agent_n]
        mean = record.predictions[r, t + 1].mean(axis=0)
        err = values[base + t + 1] - pred
        dev = pred - mean
        act = record.actions[r, t, agent_n]
        total += disc * (
            params.kappa * float(err @ err)
            + params.kappa_bar * float(dev @ dev)
            + params.gamma * float(act @ act)
        )
    return total


def evaluate_objective(record: RunRecord, agent_n: int, params: GameParams, targets) -> float:
    """Sample-path game objective of one agent, summed over rounds."""
    values = targets.values if isinstance(targets, TargetSeries) else np.asarray(targets)
    return sum(
        _round_cost(record, r, agent_n, params, values)
        for r in range(record.predictions.shape[0])
    )


def underperformer_regret(record: RunRecord) -> float:
    """Worst per-agent cost: the quantity the equilibrium minimizes."""
    return float(np.max(record.costs))


def aggregation_weights(recent_errors, alpha_a: float) -> np.ndarray:
    """Softmax weights from discounted recent squared errors.

    ``recent_errors`` is a (k, N) stack ordered oldest to newest.
    """
    errors = np.atleast_2d(np.asarray(recent_errors, dtype=float))
    k = errors.shape[0]
    disc = np.exp(-alpha_a * np.arange(k - 1, -1, -1))
    omega = disc @ errors
    logits = -(omega - omega.min())
    w = np.exp(logits)
    return w / w.sum()


def aggregate_predictions(
    per_agent_preds, recent_errors, alpha_a: float, window_Ta: int
) -> tuple[np.ndarray, np.ndarray]:
    """Score-weighted ensemble prediction; returns (prediction, weights)."""
    preds = np.atleast_2d(np.asarray(per_agent_preds, dtype=float))
    n = preds.shape[0]
    if recent_errors is None or len(recent_errors) == 0:
        w = np.full(n, 1.0 / n)
    else:
        w = aggregation_weights(np.asarray(recent_errors)[-window_Ta:], alpha_a)
    return w @ preds, w


def _rng(*key):
    return np.random.default_rng(list(key))


def _sample_encoder(cfg: EncoderConfig, d_y, d_z, d_x, rng):
    if cfg.kind == "rfn":
        return sample_rfn_params(d_y, d_z, d_x, cfg.sigma, rng)
    return sample_esn_params(d_y, d_z, d_x, cfg.sigma, rng, activation=cfg.activation)


def _encode(cfg: EncoderConfig, enc, x, noise, esn_state):
    if cfg.kind == "rfn":
        return rfn_encode(x, enc, noise), None
    z = esn_encode(x, esn_state, enc, noise)
    return z, z


def _build_bank(scenario: Scenario, inputs: np.ndarray, seed: int) -> SampleBank:
    """Latent replicas from freshly sampled encoder parameter sets, run
    over the whole input sequence (recurrent state carried through)."""
    cfg = scenario.encoder
    p = scenario.params
    d_x = inputs.shape[1]
    count = scenario.mc_samples
    encs = [_sample_encoder(cfg, p.dim_y, p.dim_z, d_x, _rng(seed, 71, i)) for i in range(count)]
    states = np.zeros((count, p.dim_y, p.dim_z))
    sams = []
    for t in range(inputs.shape[0]):
        zs = np.empty((count, p.dim_y, p.dim_z))
        for i, enc in enumerate(encs):
            noise = _rng(seed, 72, i, t).standard_normal(p.dim_z)
            z, new_state = _encode(cfg, enc, inputs[t], noise, states[i])
            zs[i] = z
            if new_state is not None:
                states[i] = new_state
        sams.append(zs)
    return SampleBank(samples=tuple(sams))


class _GreedyState:
    """Global (Z, residual) history for the ridge baseline."""

    def __init__(self, n_agents: int):
        self.history = [[] for _ in range(n_agents)]

    def push(self, n, z, resid):
        self.history[n].append((z, resid))

    def window(self, n, size):
        return self.history[n][-size:]


def _policy_round_solvers(policy, params, moments, targets_round):
    if policy == "full" or (policy == "reduced" and params.population_N == 1):
        return {"full": full_backward_pass(params, moments, targets_round)}
    if policy == "reduced":
        return {"reduced": reduced_backward_pass(params, moments, targets_round)}
    if policy == "decentralized":
        coeffs = decentralized_backward_pass(params, moments, targets_round)
        ybar = meanfield_forward(coeffs, moments, targets_round.values[0])
        return {"decentralized": coeffs, "ybar": ybar.ybar}
    return {}


def run_episode(policy: str, scenario: Scenario, seed: int) -> RunRecord:
    """Simulate one seeded episode of the configured scenario."""
    start = time.perf_counter()
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    p = scenario.params
    N, d_y, d_z, T = p.population_N, p.dim_y, p.dim_z, p.horizon_T
    targets, inputs = build_dataset(scenario.dataset)
    values = targets.values
    if values.shape[1] != d_y:
        raise ValueError(f"dataset dim {values.shape[1]} != dim_y {d_y}")
    rounds = (values.shape[0] - 1) // T
    if rounds < 1:
        raise ValueError("dataset too short for one round of the horizon")
    d_x = inputs.shape[1]

    pool = AgentPool.create(
        [_sample_encoder(scenario.encoder, d_y, d_z, d_x, _rng(seed, 11, n)) for n in range(N)],
        d_y,
        d_z,
    )
    bank = _build_bank(scenario, inputs, seed)
    greedy = _GreedyState(N) if policy == "greedy" else None
    if policy == "greedy" and scenario.ridge is None:
        raise ValueError("greedy policy needs a ridge config")
    sqrt_kappa = np.sqrt(p.kappa)

    preds_hist = np.zeros((rounds, T + 1, N, d_y))
    acts_hist = np.zeros((rounds, T, N, d_z))
    agg_hist = np.zeros((rounds, T, d_y))
    agg_w_hist = np.zeros((rounds, T, N))
    err_history: list[np.ndarray] = []  # per predicted step: (N,) squared errors
    pool_weights = np.full(N, 1.0 / N)
    spawn_events: list[dict] = []

    for r in range(rounds):
        base = r * T
        y_round = TargetSeries(values=values[base : base + T + 1])
        moments = estimate_moments(SampleBank(samples=bank.samples[base : base + T]))
        solvers = _policy_round_solvers(policy, p, moments, y_round)

        pool.predictions = np.tile(values[base], (N, 1))
        preds_hist[r, 0] = pool.predictions

        for t in range(T):
            g = base + t
            for n in range(N):
                noise = _rng(seed, 5, n, g).standard_normal(d_z)
                z, new_state = _encode(
                    scenario.encoder, pool.encoders[n], inputs[g], noise, pool.esn_state[n]
                )
                if new_state is not None:
                    pool.esn_state[n] = new_state
                pool.latents[n] = z @ pool.latent_transforms[n]

            if "full" in solvers:
                beta = full_action(t, pool.predictions.reshape(-1), solvers["full"])
                actions = beta.reshape(N, d_z)
            elif "reduced" in solvers:
                total = pool.predictions.sum(axis=0)
                actions = np.stack(
                    [
                        reduced_action(
                            t,
                            pool.predictions[n],
                            total - pool.predictions[n],
                            solvers["reduced"],
                        )
                        for n in range(N)
                    ]
                )
            elif "decentralized" in solvers:
                ybar_t = solvers["ybar"][t]
                actions = np.stack(
                    [
                        decentralized_action(
                            t, pool.predictions[n], ybar_t, solvers["decentralized"]
                        )
                        for n in range(N)
                    ]
                )
            else:  # greedy
                actions = np.zeros((N, d_z))
                for n in range(N):
                    window = greedy.window(n, scenario.ridge.window_T)
                    if window:
                        actions[n] = ridge_action(window, scenario.ridge)

            mean_pred = pool.predictions.mean(axis=0)
            new_preds = step_dynamics(pool.predictions, pool.latents, actions, p)

            if greedy is not None:
                # data-fit rows carry sqrt(kappa) so the fitted objective is
                # kappa * fit + gamma * penalty; kappa = 0 zeroes the policy
                for n in range(N):
                    resid = values[g + 1] - p.theta @ pool.predictions[n] - p.theta_bar @ mean_pred
                    greedy.push(n, sqrt_kappa * pool.latents[n], sqrt_kappa * resid)

            agg, w = aggregate_predictions(
                new_preds, err_history, scenario.aggregation_alpha, scenario.aggregation_window
            )
            err_history.append(score_agents(values[g + 1], new_preds))

            pool.predictions = new_preds
            preds_hist[r, t + 1] = new_preds
            acts_hist[r, t] = actions
            agg_hist[r, t] = agg
            agg_w_hist[r, t] = w

        if scenario.spawner is not None and r < rounds - 1:
            pool_weights = _spawn_between_rounds(
                scenario,
                pool,
                pool_weights,
                err_history[-1],
                seed,
                r,
                spawn_events,
                acts_hist[r],
                values[base + T],
            )

    record = RunRecord(
        policy=policy,
        seed=seed,
        targets=values,
        predictions=preds_hist,
        actions=acts_hist,
        aggregated=agg_hist,
        agg_weights=agg_w_hist,
        costs=np.zeros(N),
        costs_per_round=np.zeros((rounds, N)),
        regret=0.0,
        rmse_aggregated=0.0,
        rmse_worst=0.0,
        rmse_bottom20=0.0,
        messages_per_step=MESSAGES_PER_STEP[policy](N),
        spawn_events=spawn_events,
    )
    _finalize_metrics(record, p)
    record.runtime_ms = 1000.0 * (time.perf_counter() - start)
    return record


def _spawn_between_rounds(
    scenario, pool, pool_weights, last_scores, seed, round_idx, events, round_actions, y_now
):
    cfg = scenario.spawner
    rng = _rng(seed, 999, round_idx)
    flat = np.stack([flatten_encoder(e) for e in pool.encoders])
    new_flat, retained_idx, retired_idx, post = resample_parameters(
        flat, last_scores, pool_weights, cfg.lam, cfg.sigma_t, cfg.retire_k, rng
    )
    n = pool.size
    template = pool.encoders[0]
    d_z = pool.latent_transforms.shape[1]
    for slot in retired_idx:
        pool.encoders[slot] = unflatten_encoder(new_flat[slot], template)
        pool.latent_transforms[slot] = np.eye(d_z)
        if pool.esn_state is not None:
            pool.esn_state[slot] = 0.0

    event = {
        "round": int(round_idx),
        "retired": [int(i) for i in retired_idx],
        "weights": [float(x) for x in post],
    }
    if cfg.orthogonalize and cfg.zeta2 > 0:
        beta_dir = round_actions[-1].mean(axis=0)
        norm = np.linalg.norm(beta_dir)
        beta_dir = beta_dir / norm if norm > 0 else np.full(d_z, 1.0 / np.sqrt(d_z))
        prob = build_ortho_problem(
            [pool.latents[i] for i in retained_idx],
            [pool.latents[i] for i in retired_idx],
            beta_dir,
            y_now,
            cfg.zeta1,
        )
        sol = ortho_solve(prob, cfg.zeta2)
        for slot in retired_idx:
            pool.latent_transforms[slot] = sol.A_star
        event.update(
            lambda_star=float(sol.lambda_star),
            kkt_residual=float(sol.kkt_residual),
            hard_case=bool(sol.hard_case),
        )
    events.append(event)

    # retained agents keep their posterior mass, respawned ones enter at
    # the uniform share; only the next round's sparse prior consumes this
    new_weights = np.zeros(n)
    new_weights[retained_idx] = post * (n - cfg.retire_k) / n
    new_weights[retired_idx] = 1.0 / n
    return new_weights / new_weights.sum()


def _finalize_metrics(record: RunRecord, params: GameParams):
    rounds, _, N, _ = record.predictions.shape
    T = params.horizon_T
    for r in range(rounds):
        for n in range(N):
            record.costs_per_round[r, n] = _round_cost(record, r, n, params, record.targets)
    record.costs = record.costs_per_round.sum(axis=0)
    record.regret = underperformer_regret(record)

    agg_err = []
    per_agent_err = np.zeros((rounds * T, N))
    for r in range(rounds):
        for t in range(T):
            y = record.targets[r * T + t + 1]
            agg_err.append(np.sum((record.aggregated[r, t] - y) ** 2))
            per_agent_err[r * T + t] = np.sum((record.predictions[r, t + 1] - y) ** 2, axis=1)
    record.rmse_aggregated = float(np.sqrt(np.mean(agg_err)))
    per_agent_rmse = np.sqrt(per_agent_err.mean(axis=0))
    record.rmse_worst = float(per_agent_rmse.max())
    k = max(1, int(np.ceil(0.2 * N)))
    record.rmse_bottom20 = float(np.sort(per_agent_rmse)[-k:].mean())
