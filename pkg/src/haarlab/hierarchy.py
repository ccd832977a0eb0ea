"""Two-level training core: segmented rollouts, one-step high-level
advantages, advantage-splitting auxiliary rewards, skill-length
annealing, and the per-iteration update cycle.

Rollout scheme: the high-level policy picks a skill from the full
observation every k low steps; the low-level policy runs that skill
(its one-hot appended to the ego observation) until the segment ends.
The high-level reward for a segment is the plain sum of the environment
rewards inside it. Low-level transitions are later rewarded with the
segment's estimated high-level advantage split evenly over the
segment's actual length, so the per-segment sums reproduce the
advantage exactly; that conservation is enforced on every call and is
never disabled.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .policies import CategoricalPolicy, GaussianPolicy
from .trpo import AdvantageBatch, TrpoConfig, TrpoDiagnostics, trpo_update
from .values import PolynomialValueEstimator, fit_value, fold_input_scale

EPISODE_STREAM = 0xE9


class ConservationError(RuntimeError):
    """Per-segment auxiliary rewards failed to sum to the advantage."""


@dataclass
class SkillSchedule:
    """Exponentially annealed skill length with a hard floor."""
    k_1: int
    tau: float
    k_s: int
    iteration: int = 0

    def __post_init__(self):
        if self.k_1 < 1 or self.k_s < 1:
            raise ValueError("skill lengths must be >= 1")
        if self.tau < 0:
            raise ValueError("annealing temperature must be >= 0")

    def current_k(self) -> int:
        k = int(math.floor(self.k_1 * math.exp(-self.tau * self.iteration) + 0.5))
        return max(k, self.k_s)

    def advance(self) -> None:
        self.iteration += 1


@dataclass
class HighTransition:
    s_h: np.ndarray
    a_h: int
    r_h: float
    s_h_next: np.ndarray
    done: bool
    seg_len: int
    episode: int
    logp: float
    dist: np.ndarray


@dataclass
class LowTransition:
    x_l: np.ndarray          # policy input: ego observation + one-hot skill
    a_l: np.ndarray
    r_l: float
    s_l_next: np.ndarray
    done: bool
    segment_id: int
    logp: float
    dist: object

    @property
    def s_l(self) -> np.ndarray:
        return self.x_l[:len(self.s_l_next)]

    @property
    def skill(self) -> int:
        return int(np.argmax(self.x_l[len(self.s_l_next):]))


@dataclass
class EpisodeSummary:
    total_return: float
    success: bool
    length: int


@dataclass
class RolloutBatch:
    high: list[HighTransition]
    low: list[LowTransition]
    episodes: list[EpisodeSummary]
    low_dim: int
    n_skills: int

    def __post_init__(self):
        if sum(h.seg_len for h in self.high) != len(self.low):
            raise ValueError("segment lengths do not cover the low-level transitions")

    @property
    def n_low_steps(self) -> int:
        return len(self.low)

    def success_rate(self) -> float:
        return float(np.mean([e.success for e in self.episodes])) if self.episodes else 0.0

    def mean_return(self) -> float:
        return float(np.mean([e.total_return for e in self.episodes])) if self.episodes else 0.0


def episode_rng(seed: tuple[int, ...], episode: int) -> np.random.Generator:
    """Stream for one episode, independent of which worker runs it."""
    return np.random.default_rng(np.random.SeedSequence((*seed, EPISODE_STREAM, episode)))


def collect_rollouts(pi_h, pi_l, env, n_skills: int, budget_low_steps: int, k: int,
                     seed: tuple[int, ...], n_workers: int = 1) -> RolloutBatch:
    """Simulate episodes until the low-step budget is met.

    Episodes are seeded by their index, so the batch content is
    identical for every worker count; lanes only shard the schedule.
    The final episode always runs to completion.
    """
    if k < 1 or budget_low_steps < 1:
        raise ValueError("k and the step budget must be >= 1")
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    low_dim = env.low_obs_dim
    high: list[HighTransition] = []
    low: list[LowTransition] = []
    episodes: list[EpisodeSummary] = []
    total = 0
    ep_index = 0
    while total < budget_low_steps:
        rng = episode_rng(seed, ep_index)
        state, obs = env.reset(rng)
        ep_return = 0.0
        ep_len = 0
        success = False
        done = False
        while not done:
            s_h = obs.high
            skill, logp_h, dist_h = pi_h.act(s_h, rng)
            seg_id = len(high)
            onehot_block = np.zeros(n_skills)
            onehot_block[skill] = 1.0
            r_h = 0.0
            seg_len = 0
            for _ in range(k):
                x = np.empty(low_dim + n_skills)
                x[:low_dim] = obs.low
                x[low_dim:] = onehot_block
                a, logp_l, dist_l = pi_l.act(x, rng)
                state, obs, reward, done, info = env.step(state, a)
                low.append(LowTransition(x_l=x, a_l=a, r_l=0.0, s_l_next=obs.low,
                                         done=done, segment_id=seg_id, logp=logp_l,
                                         dist=dist_l))
                r_h += reward
                ep_return += reward
                seg_len += 1
                ep_len += 1
                if info.get("goal"):
                    success = True
                if done:
                    break
            high.append(HighTransition(s_h=s_h, a_h=skill, r_h=r_h, s_h_next=obs.high,
                                       done=done, seg_len=seg_len, episode=ep_index,
                                       logp=logp_h, dist=dist_h))
        episodes.append(EpisodeSummary(total_return=ep_return, success=success, length=ep_len))
        total += ep_len
        ep_index += 1
    try:
        low_log_std = pi_l.log_std.copy()
    except AttributeError:
        low_log_std = None
    batch = RolloutBatch(high=high, low=low, episodes=episodes,
                         low_dim=low_dim, n_skills=n_skills)
    batch.low_log_std = low_log_std
    return batch


def high_returns(batch: RolloutBatch, gamma_h: float) -> np.ndarray:
    """Per-decision discounted return-to-go of the segment rewards."""
    out = np.zeros(len(batch.high))
    running = 0.0
    for i in range(len(batch.high) - 1, -1, -1):
        h = batch.high[i]
        if h.done:
            running = 0.0
        running = h.r_h + gamma_h * running
        out[i] = running
    return out


def low_returns(batch: RolloutBatch, gamma_l: float) -> np.ndarray:
    """Per-step discounted return-to-go of the auxiliary rewards."""
    out = np.zeros(len(batch.low))
    running = 0.0
    for i in range(len(batch.low) - 1, -1, -1):
        t = batch.low[i]
        if t.done:
            running = 0.0
        running = t.r_l + gamma_l * running
        out[i] = running
    return out


def estimate_high_advantages(batch: RolloutBatch, v_h: PolynomialValueEstimator,
                             gamma_h: float) -> np.ndarray:
    """One-step advantage r + gamma * V(s') - V(s), zero bootstrap at
    terminal segments."""
    s = np.stack([h.s_h for h in batch.high])
    s_next = np.stack([h.s_h_next for h in batch.high])
    r = np.array([h.r_h for h in batch.high])
    live = np.array([0.0 if h.done else 1.0 for h in batch.high])
    return r + gamma_h * v_h.predict(s_next) * live - v_h.predict(s)


def assign_auxiliary_rewards(batch: RolloutBatch, advantages: np.ndarray) -> None:
    """Give every low step of segment j the reward A_j / seg_len_j.

    The per-segment sums must reproduce A_j to 1e-9; this conservation
    check is a hard error (not an assert), so it can never be disabled.
    """
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.shape != (len(batch.high),):
        raise ValueError("advantages must align with the high-level transitions")
    sums = np.zeros(len(batch.high))
    for t in batch.low:
        seg = t.segment_id
        t.r_l = advantages[seg] / batch.high[seg].seg_len
        sums[seg] += t.r_l
    err = np.max(np.abs(sums - advantages), initial=0.0)
    if err > 1e-9:
        raise ConservationError(
            f"auxiliary rewards violate per-segment conservation by {err:.3e}")


def prepare_level_batches(batch: RolloutBatch, advantages: np.ndarray, gamma_l: float,
                          v_l: PolynomialValueEstimator) -> tuple[AdvantageBatch, AdvantageBatch]:
    """Assemble the optimizer inputs for both levels.

    The high level consumes the one-step advantages directly; the low
    level uses discounted auxiliary returns against its own baseline.
    """
    high_obs = np.stack([h.s_h for h in batch.high])
    high_batch = AdvantageBatch(
        observations=high_obs,
        actions=np.array([h.a_h for h in batch.high], dtype=np.intp),
        advantages=advantages,
        old_log_probs=np.array([h.logp for h in batch.high]),
        old_dist=np.stack([h.dist for h in batch.high]),
    )
    low_obs = np.stack([t.x_l for t in batch.low])
    s_l = low_obs[:, :batch.low_dim]
    returns = low_returns(batch, gamma_l)
    low_adv = returns - v_l.predict(s_l)
    low_batch = AdvantageBatch(
        observations=low_obs,
        actions=np.stack([t.a_l for t in batch.low]),
        advantages=low_adv,
        old_log_probs=np.array([t.logp for t in batch.low]),
        old_dist=(np.stack([t.dist for t in batch.low]), batch.low_log_std),
    )
    return high_batch, low_batch


@dataclass
class TrainState:
    """Everything one training run mutates across iterations."""
    pi_h: CategoricalPolicy
    pi_l: GaussianPolicy
    schedule: SkillSchedule
    n_skills: int
    gamma_h: float
    gamma_l: float
    batch_low_steps: int
    trpo_high: TrpoConfig
    trpo_low: TrpoConfig
    seed: int
    mode: str = "concurrent"
    update_low: bool = True
    ridge: float = 1e-5
    n_workers: int = 1
    iteration: int = 0
    total_low_steps: int = 0

    def __post_init__(self):
        if self.mode not in ("concurrent", "alternate"):
            raise ValueError(f"unknown training mode {self.mode!r}")


def haar_iteration(state: TrainState, env) -> dict:
    """One iteration of the concurrent (or alternate) update cycle.

    Collect a batch under the current joint policy, fit the high-level
    baseline on the batch's discounted returns, turn its one-step
    advantages into auxiliary low-level rewards, update each level with
    its own trust-region step, and advance the skill schedule.
    """
    t_start = time.perf_counter()
    k = state.schedule.current_k()
    batch = collect_rollouts(state.pi_h, state.pi_l, env, state.n_skills,
                             state.batch_low_steps, k,
                             seed=(state.seed, state.iteration),
                             n_workers=state.n_workers)

    high_obs = np.stack([h.s_h for h in batch.high])
    v_h = fit_value_on_scaled(high_obs, high_returns(batch, state.gamma_h),
                              env.high_obs_scale, state.ridge)
    advantages = estimate_high_advantages(batch, v_h, state.gamma_h)
    assign_auxiliary_rewards(batch, advantages)

    ordinal = state.iteration + 1  # 1-based: odd batches refresh the high level
    do_high = state.mode == "concurrent" or ordinal % 2 == 1
    do_low = (state.mode == "concurrent" or ordinal % 2 == 0) and state.update_low

    low_obs = np.stack([t.x_l for t in batch.low])
    s_l = low_obs[:, :batch.low_dim]
    v_l = fit_value_on_scaled(s_l, low_returns(batch, state.gamma_l),
                              env.low_obs_scale, state.ridge)
    high_batch, low_batch = prepare_level_batches(batch, advantages, state.gamma_l, v_l)

    no_step = TrpoDiagnostics(False, 0.0, 0.0, 0.0, 0)
    diag_h = trpo_update(state.pi_h, high_batch, state.trpo_high) if do_high else no_step
    diag_l = trpo_update(state.pi_l, low_batch, state.trpo_low) if do_low else no_step

    state.total_low_steps += batch.n_low_steps
    metrics = {
        "iteration": state.iteration,
        "low_steps_total": state.total_low_steps,
        "k": k,
        "success_rate": batch.success_rate(),
        "mean_return": batch.mean_return(),
        "high_kl": diag_h.kl,
        "low_kl": diag_l.kl,
        "high_surr_improve": diag_h.improvement,
        "low_surr_improve": diag_l.improvement,
        "wall_time_s": time.perf_counter() - t_start,
        "high_diag": diag_h,
        "low_diag": diag_l,
        "updated_high": do_high,
        "updated_low": do_low,
        "n_episodes": len(batch.episodes),
    }
    state.schedule.advance()
    state.iteration += 1
    return metrics


def fit_value_on_scaled(states: np.ndarray, targets: np.ndarray, scale: np.ndarray,
                        ridge: float) -> PolynomialValueEstimator:
    """Fit on rescaled inputs for conditioning, then fold the scale into
    the weights so the estimator consumes raw observations."""
    est = fit_value(states * scale, targets, ridge)
    return fold_input_scale(est, scale)
