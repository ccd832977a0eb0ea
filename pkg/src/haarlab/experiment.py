"""Training, transfer, and reporting runs with seeded determinism.

Every run writes one directory per seed:

    metrics.csv       per-iteration training metrics (deterministic:
                      identical bytes for identical config + seed; the
                      wall_time_s column is reserved and always 0.0,
                      measured timing lives in timing.csv / run.json)
    diagnostics.csv   per-update trust-region audit rows
    timing.csv        measured per-iteration wall time (not covered by
                      the determinism contract)
    trajectories.csv  post-training traced episodes (episode, step, x,
                      y, skill)
    checkpoint.bin    final parameters of all policies
    run.json          config echo, config hash, seed, file index

Seeds are independent: they may run in parallel processes without
changing any output byte.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig
from .hierarchy import SkillSchedule, TrainState, episode_rng, haar_iteration
from .nets import MlpSpec
from .policies import CategoricalPolicy, GaussianPolicy
from .pretrain import fresh_low_policy, pretrain_skills
from .trpo import AdvantageBatch, TrpoConfig, trpo_update
from .values import fit_value
from .hierarchy import fit_value_on_scaled

HIGH_INIT_STREAM = 0x12
FLAT_INIT_STREAM = 0x13
TRACE_STREAM = 0x7A

METRIC_COLUMNS = ("iteration", "low_steps_total", "k", "success_rate", "mean_return",
                  "high_kl", "low_kl", "high_surr_improve", "low_surr_improve",
                  "wall_time_s")
DIAG_COLUMNS = ("iteration", "level", "kl", "surrogate_before", "surrogate_after",
                "backtracks", "accepted")
TRACE_EPISODES = 10


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "True" if value else "False"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def fresh_high_policy(cfg: ExperimentConfig, env, seed: int) -> CategoricalPolicy:
    rng = np.random.default_rng(np.random.SeedSequence((seed, HIGH_INIT_STREAM)))
    return CategoricalPolicy(MlpSpec(env.high_obs_dim, (32, 32), cfg.n_skills), rng,
                             input_scale=env.high_obs_scale)


def fresh_flat_policy(cfg: ExperimentConfig, env, seed: int) -> GaussianPolicy:
    rng = np.random.default_rng(np.random.SeedSequence((seed, FLAT_INIT_STREAM)))
    return GaussianPolicy(MlpSpec(env.high_obs_dim, (32, 32), 2), rng,
                          input_scale=env.high_obs_scale)


def policy_segments(pi_h, pi_l) -> dict[str, np.ndarray]:
    return {
        "pi_h/logits_net": pi_h.params.segment("logits_net").copy(),
        "pi_l/mean_net": pi_l.params.segment("mean_net").copy(),
        "pi_l/log_std": pi_l.params.segment("log_std").copy(),
    }


def load_policy_segments(path: str, pi_h=None, pi_l=None) -> dict:
    segments, metadata = load_checkpoint(path)
    def put(policy, seg_key, name):
        if seg_key not in segments:
            raise CheckpointError(f"checkpoint {path} lacks segment {seg_key!r}")
        arr = segments[seg_key]
        want = policy.params.layout[name][1]
        if arr.size != want:
            raise CheckpointError(
                f"segment {seg_key!r} has {arr.size} values, expected {want}: "
                "checkpoint and config dimensions do not match")
        policy.params.set_segment(name, arr)
    if pi_l is not None:
        put(pi_l, "pi_l/mean_net", "mean_net")
        put(pi_l, "pi_l/log_std", "log_std")
    if pi_h is not None:
        put(pi_h, "pi_h/logits_net", "logits_net")
    return metadata


@dataclass
class RunRecord:
    directory: str
    config_hash: str
    seed: int
    metrics_path: str
    checkpoint_path: str


class _CsvSink:
    def __init__(self, path: str, columns):
        self.path = path
        self.columns = columns
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(columns)

    def row(self, values):
        self._writer.writerow([_fmt(v) for v in values])

    def close(self):
        self._fh.close()


def _trace_trajectories(path: str, env, act_fn, seed: int, episodes: int = TRACE_EPISODES):
    """Simulate fresh post-training episodes and dump positions."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("episode", "step", "x", "y", "skill"))
        for ep in range(episodes):
            rng = np.random.default_rng(np.random.SeedSequence((seed, TRACE_STREAM, ep)))
            state, obs = env.reset(rng)
            step = 0
            writer.writerow((ep, step, _fmt(state.agent.position[0]),
                             _fmt(state.agent.position[1]), -1))
            done = False
            while not done:
                action, skill = act_fn(obs, rng)
                state, obs, _, done, _ = env.step(state, action)
                step += 1
                writer.writerow((ep, step, _fmt(state.agent.position[0]),
                                 _fmt(state.agent.position[1]), skill))


def run_single_seed(cfg: ExperimentConfig, seed: int, out_dir: str,
                    skills_checkpoint: str | None = None,
                    transfer: str | None = None,
                    source_checkpoint: str | None = None,
                    log=None) -> RunRecord:
    """Train one seed and persist its artifacts under out_dir/seed_<n>."""
    run_dir = os.path.join(out_dir, f"seed_{seed}")
    os.makedirs(run_dir, exist_ok=True)
    t0 = time.perf_counter()
    if cfg.algorithm == "flat_trpo":
        payload = _run_flat(cfg, seed, run_dir, log)
    else:
        payload = _run_hierarchical(cfg, seed, run_dir, skills_checkpoint,
                                    transfer, source_checkpoint, log)
    payload.update({
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": seed,
        "transfer": transfer or "",
        "wall_time_total_s": time.perf_counter() - t0,
        "metrics": "metrics.csv",
        "diagnostics": "diagnostics.csv",
        "checkpoint": "checkpoint.bin",
        "trajectories": "trajectories.csv",
    })
    with open(os.path.join(run_dir, "run.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return RunRecord(run_dir, cfg.config_hash(), seed,
                     os.path.join(run_dir, "metrics.csv"),
                     os.path.join(run_dir, "checkpoint.bin"))


def _run_hierarchical(cfg, seed, run_dir, skills_checkpoint, transfer,
                      source_checkpoint, log):
    env = cfg.build_env()
    pi_h = fresh_high_policy(cfg, env, seed)
    pi_l = fresh_low_policy(cfg.pretrain, env, seed)
    if transfer in ("both", "low_only"):
        if not source_checkpoint:
            raise ConfigError("transfer runs need a source checkpoint")
        load_policy_segments(source_checkpoint,
                             pi_h=pi_h if transfer == "both" else None, pi_l=pi_l)
    elif transfer not in (None, "none"):
        raise ConfigError(f"unknown transfer mode {transfer!r}")
    elif skills_checkpoint:
        load_policy_segments(skills_checkpoint, pi_l=pi_l)
    elif cfg.pretrain.proxy != "random_init":
        raise ConfigError(
            "pre-trained skills are required (run the pretrain command first, "
            "or set pretrain.proxy = random_init)")

    state = TrainState(
        pi_h=pi_h, pi_l=pi_l,
        schedule=SkillSchedule(cfg.k_0, cfg.annealing_tau, cfg.k_s),
        n_skills=cfg.n_skills, gamma_h=cfg.gamma_h, gamma_l=cfg.gamma_l,
        batch_low_steps=cfg.B,
        trpo_high=TrpoConfig(max_kl=cfg.max_kl), trpo_low=TrpoConfig(max_kl=cfg.max_kl),
        seed=seed, mode=cfg.mode,
        update_low=cfg.algorithm != "frozen_skills",
        ridge=cfg.ridge, n_workers=cfg.rollout_workers)

    metrics = _CsvSink(os.path.join(run_dir, "metrics.csv"), METRIC_COLUMNS)
    diags = _CsvSink(os.path.join(run_dir, "diagnostics.csv"), DIAG_COLUMNS)
    timing = _CsvSink(os.path.join(run_dir, "timing.csv"), ("iteration", "wall_time_s"))
    final_success = 0.0
    try:
        for it in range(cfg.N):
            m = haar_iteration(state, env)
            metrics.row([m["iteration"], m["low_steps_total"], m["k"],
                         m["success_rate"], m["mean_return"], m["high_kl"], m["low_kl"],
                         m["high_surr_improve"], m["low_surr_improve"], 0.0])
            for level, diag, updated in (("high", m["high_diag"], m["updated_high"]),
                                         ("low", m["low_diag"], m["updated_low"])):
                if updated:
                    diags.row([m["iteration"], level, diag.kl, diag.surrogate_before,
                               diag.surrogate_after, diag.backtracks, diag.accepted])
            timing.row([m["iteration"], m["wall_time_s"]])
            final_success = m["success_rate"]
            if log:
                log(f"iter {it + 1}/{cfg.N} k={m['k']} "
                    f"success={m['success_rate']:.2f} return={m['mean_return']:.1f}")
    finally:
        metrics.close()
        diags.close()
        timing.close()

    save_checkpoint(os.path.join(run_dir, "checkpoint.bin"), policy_segments(pi_h, pi_l),
                    metadata={"algorithm": cfg.algorithm, "task": cfg.task,
                              "n_skills": cfg.n_skills, "seed": seed,
                              "config_hash": cfg.config_hash()})

    k_trace = state.schedule.current_k()
    skill_box = {"skill": -1, "left": 0}

    def act_fn(obs, rng):
        if skill_box["left"] == 0:
            skill_box["skill"], _, _ = pi_h.act(obs.high, rng)
            skill_box["left"] = k_trace
        x = np.empty(env.low_obs_dim + cfg.n_skills)
        x[:env.low_obs_dim] = obs.low
        x[env.low_obs_dim:] = 0.0
        x[env.low_obs_dim + skill_box["skill"]] = 1.0
        a, _, _ = pi_l.act(x, rng)
        skill_box["left"] -= 1
        return a, skill_box["skill"]

    _trace_trajectories(os.path.join(run_dir, "trajectories.csv"), env, act_fn, seed)
    return {"final_success_rate": final_success,
            "total_low_steps": state.total_low_steps}


def _run_flat(cfg, seed, run_dir, log):
    """Non-hierarchical baseline: one Gaussian policy on the full
    observation, trained on the raw environment rewards."""
    env = cfg.build_env()
    policy = fresh_flat_policy(cfg, env, seed)
    trpo_cfg = TrpoConfig(max_kl=cfg.max_kl)
    metrics = _CsvSink(os.path.join(run_dir, "metrics.csv"), METRIC_COLUMNS)
    diags = _CsvSink(os.path.join(run_dir, "diagnostics.csv"), DIAG_COLUMNS)
    timing = _CsvSink(os.path.join(run_dir, "timing.csv"), ("iteration", "wall_time_s"))
    total_steps = 0
    final_success = 0.0
    try:
        for it in range(cfg.N):
            t_it = time.perf_counter()
            obs_l, acts, rewards, dones, logps, dists = [], [], [], [], [], []
            successes, returns = [], []
            collected = 0
            ep = 0
            while collected < cfg.B:
                rng = episode_rng((seed, it), ep)
                state, ob = env.reset(rng)
                done = False
                ep_ret = 0.0
                success = False
                while not done:
                    s_h = ob.high
                    a, logp, mu = policy.act(s_h, rng)
                    state, ob, r, done, info = env.step(state, a)
                    obs_l.append(s_h)
                    acts.append(a)
                    rewards.append(r)
                    dones.append(done)
                    logps.append(logp)
                    dists.append(mu)
                    ep_ret += r
                    collected += 1
                    if info.get("goal"):
                        success = True
                successes.append(success)
                returns.append(ep_ret)
                ep += 1
            obs_arr = np.stack(obs_l)
            rets = np.zeros(len(rewards))
            running = 0.0
            for i in range(len(rewards) - 1, -1, -1):
                if dones[i]:
                    running = 0.0
                running = rewards[i] + cfg.gamma_l * running
                rets[i] = running
            v = fit_value_on_scaled(obs_arr, rets, env.high_obs_scale, cfg.ridge)
            adv = rets - v.predict(obs_arr)
            batch = AdvantageBatch(obs_arr, np.stack(acts), adv, np.array(logps),
                                   (np.stack(dists), policy.log_std.copy()))
            diag = trpo_update(policy, batch, trpo_cfg)
            total_steps += collected
            final_success = float(np.mean(successes))
            metrics.row([it, total_steps, 1, final_success, float(np.mean(returns)),
                         diag.kl, 0.0, diag.improvement, 0.0, 0.0])
            diags.row([it, "flat", diag.kl, diag.surrogate_before, diag.surrogate_after,
                       diag.backtracks, diag.accepted])
            timing.row([it, time.perf_counter() - t_it])
            if log:
                log(f"iter {it + 1}/{cfg.N} success={final_success:.2f}")
    finally:
        metrics.close()
        diags.close()
        timing.close()

    save_checkpoint(os.path.join(run_dir, "checkpoint.bin"),
                    {"flat/mean_net": policy.params.segment("mean_net").copy(),
                     "flat/log_std": policy.params.segment("log_std").copy()},
                    metadata={"algorithm": "flat_trpo", "task": cfg.task, "seed": seed,
                              "config_hash": cfg.config_hash()})

    def act_fn(obs, rng):
        a, _, _ = policy.act(obs.high, rng)
        return a, -1

    _trace_trajectories(os.path.join(run_dir, "trajectories.csv"), env, act_fn, seed)
    return {"final_success_rate": final_success, "total_low_steps": total_steps}


def _seed_job(args):
    cfg_dict, seed, out_dir, skills, transfer, source = args
    cfg = _config_from_dict(cfg_dict)
    record = run_single_seed(cfg, seed, out_dir, skills_checkpoint=skills,
                             transfer=transfer, source_checkpoint=source)
    return record.directory


def _config_from_dict(d: dict) -> ExperimentConfig:
    from .config import PretrainConfig
    pre = {k.split(".", 1)[1]: v for k, v in d.items() if k.startswith("pretrain.")}
    top = {k: v for k, v in d.items() if not k.startswith("pretrain.")}
    if "seeds" in top:
        top["seeds"] = tuple(top["seeds"])
    if "hidden" in pre:
        pre["hidden"] = tuple(pre["hidden"])
    return ExperimentConfig(pretrain=PretrainConfig(**pre), **top)


def run_train(cfg: ExperimentConfig, out_dir: str,
              skills: dict[int, str] | str | None = None,
              transfer: str | None = None,
              source: dict[int, str] | str | None = None,
              jobs: int = 1, log=None) -> list[str]:
    """Run every seed of the config; returns the run directories.

    `skills` / `source` may be a single checkpoint path (shared by all
    seeds) or a per-seed mapping. Seeds run as independent processes
    when jobs > 1; outputs are identical either way.
    """
    os.makedirs(out_dir, exist_ok=True)

    def pick(mapping, seed):
        if mapping is None or isinstance(mapping, str):
            return mapping
        return mapping[seed]

    tasks = [(cfg.to_dict(), seed, out_dir, pick(skills, seed), transfer,
              pick(source, seed)) for seed in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with get_context("fork").Pool(min(jobs, len(tasks))) as pool:
            return pool.map(_seed_job, tasks)
    out = []
    for t in tasks:
        out.append(_seed_job(t))
        if log:
            log(f"finished {t[1]}")
    return out


def run_pretrain(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> dict[int, str]:
    """Pre-train one skill set per seed; returns seed -> checkpoint path."""
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(cfg.to_dict(), seed, out_dir) for seed in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with get_context("fork").Pool(min(jobs, len(tasks))) as pool:
            paths = pool.map(_pretrain_job, tasks)
    else:
        paths = [_pretrain_job(t) for t in tasks]
    return dict(zip(cfg.seeds, paths))


def _pretrain_job(args):
    cfg_dict, seed, out_dir = args
    cfg = _config_from_dict(cfg_dict)
    pi_l, stats = pretrain_skills(cfg.pretrain, seed)
    path = os.path.join(out_dir, f"skills_seed_{seed}.bin")
    save_checkpoint(path, {"pi_l/mean_net": pi_l.params.segment("mean_net").copy(),
                           "pi_l/log_std": pi_l.params.segment("log_std").copy()},
                    metadata={"n_skills": cfg.pretrain.n_skills,
                              "proxy": cfg.pretrain.proxy,
                              "env": "open_field/v1", "seed": seed,
                              "iterations": cfg.pretrain.iterations})
    with open(os.path.join(out_dir, f"skills_seed_{seed}.json"), "w") as fh:
        json.dump({"stats": stats, "seed": seed}, fh, indent=2)
    return path


def read_metrics(path: str) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    out = {}
    for col in reader.fieldnames:
        vals = [row[col] for row in rows]
        if col in ("iteration", "low_steps_total", "k"):
            out[col] = np.array([int(v) for v in vals])
        else:
            out[col] = np.array([float(v) for v in vals])
    return out


def run_report(run_dirs: list[str], out_path: str) -> None:
    """Per-iteration mean and 95% confidence band over seeds."""
    if not run_dirs:
        raise ValueError("report needs at least one run directory")
    per_seed = [read_metrics(os.path.join(d, "metrics.csv")) for d in run_dirs]
    n_iters = {len(m["iteration"]) for m in per_seed}
    if len(n_iters) != 1:
        raise ValueError(f"runs have mismatched iteration counts: {sorted(n_iters)}")
    n = len(per_seed)

    def band(key):
        data = np.stack([m[key] for m in per_seed])  # (seeds, iters)
        mean = data.mean(axis=0)
        if n == 1:
            half = np.zeros_like(mean)
        else:
            half = 1.96 * data.std(axis=0, ddof=1) / np.sqrt(n)
        return mean, half

    succ_mean, succ_half = band("success_rate")
    ret_mean, ret_half = band("mean_return")
    steps_mean, _ = band("low_steps_total")
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("iteration", "mean_low_steps", "success_mean", "success_ci95",
                         "return_mean", "return_ci95"))
        for i in range(len(succ_mean)):
            writer.writerow([str(i), _fmt(float(steps_mean[i])), _fmt(succ_mean[i]),
                             _fmt(succ_half[i]), _fmt(ret_mean[i]), _fmt(ret_half[i])])
