"""Experiment configuration: typed fields, task presets, and the plain
text `key = value` config file format.

File format: one `key = value` pair per line; `#` starts a comment;
blank lines ignored. Keys are the field names below (hyperparameters
use the conventional short names N, B, gamma_l, gamma_h, k_0, k_s, T).
Pre-training fields nest as `pretrain.<field>`. `seeds` takes a comma
separated integer list. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields

from .envs.maze import build_maze, load_maze_file
from .envs.point import EnvConfig, PointEnv
from .pretrain import PretrainConfig

TASKS = ("point_maze", "point_gather", "swimmer_maze_lite")
ALGORITHMS = ("haar", "haar_no_anneal", "flat_trpo", "frozen_skills")
MODES = ("concurrent", "alternate")
TRANSFER_MODES = ("both", "low_only", "none")

TASK_MAZE = {"point_maze": "c_maze", "point_gather": "gather",
             "swimmer_maze_lite": "c_maze"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "point_maze"
    algorithm: str = "haar"
    N: int = 300                # training iterations
    B: int = 5000               # low-level steps collected per iteration
    gamma_h: float = 0.99
    gamma_l: float = 0.99
    k_0: int = 100              # initial skill length
    k_s: int = 10               # shortest skill length
    T: int = 500                # max low steps per episode
    n_skills: int = 6
    seeds: tuple[int, ...] = (0,)
    mode: str = "concurrent"
    tau: float = -1.0           # <0: anneal so k reaches k_s halfway through training
    max_kl: float = 0.01
    rollout_workers: int = 1
    no_annealing: bool = False  # transfer runs pin the skill length
    maze: str = ""              # override the task's maze kind
    maze_file: str = ""         # load a custom maze layout instead
    cell_size: float = 4.0
    v_max: float = 2.0
    dt: float = 0.2
    action_scale: float = 4.0
    ray_max: float = 16.0
    stumble_threshold: float = 1.5
    ridge: float = 1e-5
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r} (choose from {TASKS})")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r} (choose from {ALGORITHMS})")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r} (choose from {MODES})")
        for name in ("N", "B", "k_0", "k_s", "T", "n_skills", "rollout_workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("gamma_h", "gamma_l"):
            g = getattr(self, name)
            if not 0.0 < g < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.k_s > self.k_0:
            raise ConfigError("k_s cannot exceed k_0")
        if self.algorithm == "haar_no_anneal" or self.no_annealing:
            # same skill length throughout as at the end of training
            self.k_0 = self.k_s
        if self.pretrain.n_skills != self.n_skills:
            self.pretrain = PretrainConfig(
                n_skills=self.n_skills, iterations=self.pretrain.iterations,
                proxy=self.pretrain.proxy, batch_low_steps=self.pretrain.batch_low_steps,
                episode_steps=self.pretrain.episode_steps, gamma=self.pretrain.gamma,
                hidden=self.pretrain.hidden)

    @property
    def annealing_tau(self) -> float:
        if self.tau >= 0.0:
            return self.tau
        if self.k_0 == self.k_s:
            return 0.0
        # fully annealed halfway through training
        return 2.0 * math.log(self.k_0 / self.k_s) / self.N

    def maze_kind(self) -> str:
        return self.maze or TASK_MAZE[self.task]

    def env_config(self) -> EnvConfig:
        return EnvConfig(max_episode_steps=self.T, action_scale=self.action_scale,
                         dt=self.dt, v_max=self.v_max, ray_max=self.ray_max,
                         stumble_enabled=self.task != "swimmer_maze_lite",
                         stumble_threshold=self.stumble_threshold)

    def build_env(self) -> PointEnv:
        if self.maze_file:
            maze = load_maze_file(self.maze_file, cell_size=self.cell_size)
        else:
            maze = build_maze(self.maze_kind(), cell_size=self.cell_size)
        return PointEnv(maze, self.env_config())

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "pretrain":
                for pf in fields(PretrainConfig):
                    out[f"pretrain.{pf.name}"] = _plain(getattr(v, pf.name))
            else:
                out[f.name] = _plain(v)
        return out

    def config_hash(self) -> str:
        d = self.to_dict()
        # worker count shards the rollout schedule without changing any
        # result byte, so it stays out of the result-identity hash
        d.pop("rollout_workers")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _plain(v):
    if isinstance(v, tuple):
        return list(v)
    return v


_INT_LIST = ("seeds",)
_TUPLE_FIELDS = {"seeds": int, "pretrain.hidden": int}


def _field_types():
    types = {}
    for f in fields(ExperimentConfig):
        if f.name == "pretrain":
            for pf in fields(PretrainConfig):
                types[f"pretrain.{pf.name}"] = pf.type
        else:
            types[f.name] = f.type
    return types


def _convert(key: str, raw: str, typ: str):
    raw = raw.strip()
    if key in _TUPLE_FIELDS:
        if not raw:
            return ()
        return tuple(_TUPLE_FIELDS[key](part.strip()) for part in raw.split(","))
    if typ in ("int",):
        return int(raw)
    if typ in ("float",):
        return float(raw)
    if typ in ("bool",):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse boolean {raw!r} for {key}")
    return raw


def parse_config_text(text: str) -> ExperimentConfig:
    types = _field_types()
    top: dict = {}
    pre: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            value = _convert(key, raw, str(types[key]))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
        if key.startswith("pretrain."):
            pre[key.split(".", 1)[1]] = value
        else:
            top[key] = value
    try:
        if pre:
            top["pretrain"] = PretrainConfig(**pre)
        return ExperimentConfig(**top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
