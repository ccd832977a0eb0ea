import numpy as np
import pytest

from haarlab.envs.maze import build_maze, parse_maze_text
from haarlab.envs.point import (HIGH_OBS_DIM, LOW_OBS_DIM, STUMBLE_STEPS, AgentState,
                                EnvConfig, EpisodeState, PointEnv)


def make_env(kind="c_maze", **cfg_kwargs):
    return PointEnv(build_maze(kind), EnvConfig(**cfg_kwargs))


def substep_move(maze, p, v, dt, n_sub):
    """Brute-force axis-separated sub-stepping oracle for the sweep."""
    x, y = float(p[0]), float(p[1])
    vx, vy = float(v[0]), float(v[1])
    h = dt / n_sub
    for _ in range(n_sub):
        nx = x + vx * h
        if maze.is_wall_cell(int(y // maze.cell_size), int(nx // maze.cell_size)):
            vx = 0.0
        else:
            x = nx
        ny = y + vy * h
        if maze.is_wall_cell(int(ny // maze.cell_size), int(x // maze.cell_size)):
            vy = 0.0
        else:
            y = ny
    return np.array([x, y]), np.array([vx, vy])


def state_at(env, position, velocity):
    agent = AgentState(position=np.asarray(position, dtype=float),
                       velocity=np.asarray(velocity, dtype=float), heading=0.0, alive=True)
    return EpisodeState(agent=agent, t=0, overdrive=0, done=False)


# -- reset ---------------------------------------------------------------------

def test_open_field_reset_at_center():
    env = make_env("open_field")
    state, obs = env.reset(np.random.default_rng(0))
    expected = env.maze.cell_center(env.maze.start_cells[0])
    assert np.array_equal(state.agent.position, expected)
    assert np.array_equal(state.agent.velocity, np.zeros(2))


def test_reset_uniform_over_start_cells():
    env = make_env("c_maze")
    rng = np.random.default_rng(1)
    counts = {cell: 0 for cell in env.maze.start_cells}
    n = 10_000
    for _ in range(n):
        state, _ = env.reset(rng)
        counts[env.maze.cell_of(state.agent.position)] += 1
    expected = n / len(counts)
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 <= 9.0  # ~3 sigma for 1 dof


def test_reset_positions_inside_start_region_uniformly():
    env = make_env("c_maze")
    rng = np.random.default_rng(2)
    xs = []
    for _ in range(4000):
        state, _ = env.reset(rng)
        assert env.maze.cell_of(state.agent.position) in env.maze.start_cells
        xs.append(state.agent.position[0])
    # within-cell offsets should span the cell, not cluster at the center
    offs = np.array(xs) % env.maze.cell_size
    assert offs.min() < 0.2 and offs.max() > 3.8


def test_reset_observation_prefix_property():
    env = make_env("c_maze")
    state, obs = env.reset(np.random.default_rng(3))
    assert obs.low.shape == (LOW_OBS_DIM,)
    assert obs.high.shape == (HIGH_OBS_DIM,)
    assert np.array_equal(obs.high[:LOW_OBS_DIM], obs.low)


# -- dynamics -------------------------------------------------------------------

def test_zero_action_zero_velocity_stays_put():
    env = make_env("c_maze")
    state = state_at(env, env.maze.cell_center((1, 1)), [0.0, 0.0])
    nxt, obs, reward, done, info = env.step(state, np.zeros(2))
    assert np.array_equal(nxt.agent.position, state.agent.position)
    assert reward == 0.0 and not done


def test_step_into_goal_cell_pays_goal_reward():
    env = make_env("c_maze")
    goal_center = env.maze.cell_center(env.maze.goal_cell)
    start = goal_center + np.array([env.maze.cell_size, 0.0])  # one cell right of goal
    state = state_at(env, start, [-env.cfg.v_max, 0.0])
    total = 0.0
    for _ in range(20):
        state, obs, reward, done, info = env.step(state, np.zeros(2))
        total += reward
        if done:
            break
    assert info["goal"] and done
    assert total == env.cfg.goal_reward


def test_wall_collision_preserves_tangential_motion():
    env = make_env("c_maze")
    cs = env.maze.cell_size
    # start cell (1,1); wall below at row 2, open to the right
    pos = np.array([1.5 * cs, 2.0 * cs - 0.1])
    vel = np.array([1.0, 1.5])
    state = state_at(env, pos, vel)
    nxt, *_ = env.step(state, np.zeros(2))
    new_pos, new_vel = nxt.agent.position, nxt.agent.velocity
    assert not env.maze.is_wall_cell(*env.maze.cell_of(new_pos))
    assert new_pos[1] <= 2 * cs  # stopped at the wall face
    assert new_vel[1] == 0.0
    assert new_vel[0] == vel[0]  # tangential component preserved
    assert new_pos[0] > pos[0]


def test_sweep_matches_substepping_oracle():
    env = make_env("c_maze")
    maze = env.maze
    rng = np.random.default_rng(4)
    free = maze.free_cells()
    for _ in range(100):
        cell = free[int(rng.integers(len(free)))]
        frac = rng.uniform(0.05, 0.95, size=2)
        pos = np.array([(cell[1] + frac[0]) * maze.cell_size,
                        (cell[0] + frac[1]) * maze.cell_size])
        vel = rng.uniform(-1, 1, size=2)
        vel *= rng.uniform(0, env.cfg.v_max) / max(np.linalg.norm(vel), 1e-9)
        state = state_at(env, pos, vel)
        nxt, *_ = env.step(state, np.zeros(2))
        ref_pos, _ = substep_move(maze, pos, vel, env.cfg.dt, n_sub=20_000)
        assert not maze.is_wall_cell(*maze.cell_of(nxt.agent.position))
        assert np.max(np.abs(nxt.agent.position - ref_pos)) <= 1e-3


def test_speed_clipped_to_v_max():
    env = make_env("open_field")
    state, _ = env.reset(np.random.default_rng(5))
    for _ in range(10):
        state, *_ = env.step(state, np.array([1.0, 0.4]))
    assert np.linalg.norm(state.agent.velocity) <= env.cfg.v_max + 1e-12


def test_dynamics_deterministic():
    env = make_env("c_maze")
    state = state_at(env, env.maze.cell_center((1, 2)), [0.3, -0.2])
    a = env.step(state, np.array([0.5, 0.1]))
    b = env.step(state, np.array([0.5, 0.1]))
    assert np.array_equal(a[0].agent.position, b[0].agent.position)
    assert np.array_equal(a[0].agent.velocity, b[0].agent.velocity)


# -- stumble rule ----------------------------------------------------------------

def test_sustained_overdrive_causes_death():
    env = make_env("open_field")
    state, _ = env.reset(np.random.default_rng(6))
    big = np.array([env.cfg.stumble_threshold + 0.5, 0.0])
    rewards = []
    for i in range(STUMBLE_STEPS):
        state, _, reward, done, info = env.step(state, big)
        rewards.append(reward)
    assert done and info["death"] and not state.agent.alive
    assert rewards == [0.0] * (STUMBLE_STEPS - 1) + [env.cfg.death_reward]


def test_interrupted_overdrive_survives():
    env = make_env("open_field")
    state, _ = env.reset(np.random.default_rng(7))
    big = np.array([env.cfg.stumble_threshold + 0.5, 0.0])
    for action in [big, big, np.zeros(2), big, big]:
        state, _, _, done, _ = env.step(state, action)
    assert not done and state.agent.alive


def test_stumble_can_be_disabled():
    env = make_env("open_field", stumble_enabled=False)
    state, _ = env.reset(np.random.default_rng(8))
    big = np.array([9.0, 0.0])
    for _ in range(10):
        state, _, _, done, info = env.step(state, big)
    assert not done


# -- task independence and reward sets --------------------------------------------

def test_low_obs_ignores_maze():
    cfg = EnvConfig()
    env_a = PointEnv(build_maze("c_maze"), cfg)
    env_b = PointEnv(build_maze("mirrored"), cfg)
    agent = AgentState(position=np.array([9.0, 6.0]), velocity=np.array([0.4, -0.1]),
                       heading=0.0, alive=True)
    assert np.array_equal(env_a.low_obs(agent), env_b.low_obs(agent))


def test_maze_episode_rewards_in_allowed_set():
    env = make_env("c_maze", max_episode_steps=60)
    rng = np.random.default_rng(9)
    for _ in range(30):
        state, _ = env.reset(rng)
        total, done = 0.0, False
        while not done:
            state, _, reward, done, _ = env.step(state, rng.normal(0, 0.8, size=2))
            assert reward in (0.0, env.cfg.goal_reward, env.cfg.death_reward)
            total += reward
        assert total in (0.0, env.cfg.goal_reward, env.cfg.death_reward)


def test_gather_episode():
    env = make_env("gather", max_episode_steps=120)
    rng = np.random.default_rng(10)
    returns = []
    for _ in range(20):
        state, _ = env.reset(rng)
        assert state.food_active.sum() == 8 and state.bomb_active.sum() == 8
        total, done = 0.0, False
        while not done:
            state, _, reward, done, _ = env.step(state, rng.normal(0, 0.6, size=2))
            total += reward
        returns.append(total)
        assert -18.0 <= total <= 8.0
    assert max(returns) > 0  # random walking does collect something


def test_gather_contact_collects_once():
    env = make_env("gather")
    state, _ = env.reset(np.random.default_rng(11))
    target = state.food_sites[0].copy()
    # place the agent on top of the first food site
    state.agent.position = target.copy()
    nxt, _, reward, done, info = env.step(state, np.zeros(2))
    assert reward == env.cfg.food_reward and info["food"] == 1
    assert nxt.food_active.sum() == 7
    # second step on the same (consumed) site pays nothing
    nxt2, _, reward2, _, info2 = env.step(nxt, np.zeros(2))
    assert reward2 == 0.0 and info2["food"] == 0


def test_timeout_sets_done():
    env = make_env("c_maze", max_episode_steps=5)
    state, _ = env.reset(np.random.default_rng(12))
    for _ in range(5):
        state, _, _, done, info = env.step(state, np.zeros(2))
    assert done and info["timeout"]
    with pytest.raises(RuntimeError):
        env.step(state, np.zeros(2))


def test_obs_scales_shapes():
    env = make_env("c_maze")
    assert env.low_obs_scale.shape == (LOW_OBS_DIM,)
    assert env.high_obs_scale.shape == (HIGH_OBS_DIM,)
