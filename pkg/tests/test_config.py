import math

import pytest

from haarlab.config import ConfigError, ExperimentConfig, load_config, parse_config_text
from haarlab.pretrain import PretrainConfig


def test_defaults_mirror_reference_table():
    cfg = ExperimentConfig()
    assert cfg.task == "point_maze"
    assert cfg.gamma_h == 0.99 and cfg.gamma_l == 0.99
    assert cfg.k_0 == 100 and cfg.k_s == 10
    assert cfg.B == 5000 and cfg.N == 300
    assert cfg.max_kl == 0.01
    assert cfg.pretrain.n_skills == 6


def test_no_anneal_forces_constant_skill_length():
    cfg = ExperimentConfig(algorithm="haar_no_anneal", k_0=100, k_s=10)
    assert cfg.k_0 == cfg.k_s == 10
    assert cfg.annealing_tau == 0.0


def test_default_tau_fully_anneals_halfway():
    cfg = ExperimentConfig(N=300, k_0=100, k_s=10)
    tau = cfg.annealing_tau
    k_half = cfg.k_0 * math.exp(-tau * (cfg.N / 2))
    assert abs(k_half - cfg.k_s) < 1e-9


def test_validation_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig(task="mujoco_ant")
    with pytest.raises(ConfigError):
        ExperimentConfig(algorithm="ppo")
    with pytest.raises(ConfigError):
        ExperimentConfig(N=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(gamma_h=1.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=())
    with pytest.raises(ConfigError):
        ExperimentConfig(k_0=5, k_s=10)
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="parallel")


def test_parse_config_text_round_trip():
    text = """
    # experiment
    task = point_maze
    algorithm = haar
    N = 40
    B = 2000
    gamma_h = 0.95
    seeds = 1, 2, 3
    mode = alternate
    pretrain.iterations = 7
    pretrain.proxy = random_init
    """
    cfg = parse_config_text(text)
    assert cfg.N == 40 and cfg.B == 2000
    assert cfg.gamma_h == 0.95
    assert cfg.seeds == (1, 2, 3)
    assert cfg.mode == "alternate"
    assert cfg.pretrain.iterations == 7
    assert cfg.pretrain.proxy == "random_init"


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError):
        parse_config_text("learning_rate = 0.1")


def test_parse_rejects_bad_value():
    with pytest.raises(ConfigError):
        parse_config_text("N = ten")
    with pytest.raises(ConfigError):
        parse_config_text("task point_maze")


def test_load_config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("task = point_gather\nN = 5\nseeds = 4\n")
    cfg = load_config(str(path))
    assert cfg.task == "point_gather"
    assert cfg.maze_kind() == "gather"
    assert cfg.seeds == (4,)


def test_config_hash_sensitivity():
    a = ExperimentConfig(N=10)
    b = ExperimentConfig(N=11)
    assert a.config_hash() != b.config_hash()
    assert a.config_hash() == ExperimentConfig(N=10).config_hash()


def test_pretrain_n_skills_follows_experiment():
    cfg = ExperimentConfig(n_skills=4)
    assert cfg.pretrain.n_skills == 4


def test_swimmer_variant_disables_stumble():
    assert ExperimentConfig(task="swimmer_maze_lite").env_config().stumble_enabled is False
    assert ExperimentConfig(task="point_maze").env_config().stumble_enabled is True


def test_maze_file_override(tmp_path):
    maze = tmp_path / "m.txt"
    maze.write_text("#####\n#S.G#\n#####\n")
    cfg = ExperimentConfig(maze_file=str(maze))
    env = cfg.build_env()
    assert env.maze.goal_cell == (1, 3)


def test_pretrain_config_validation():
    with pytest.raises(ValueError):
        PretrainConfig(proxy="entropy")
    with pytest.raises(ValueError):
        PretrainConfig(n_skills=1)
    # random_init does not need multiple directions
    PretrainConfig(n_skills=1, proxy="random_init")
