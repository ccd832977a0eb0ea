"""Range sensor: 20 rays cast against the wall grid, plus an unoccluded
goal bearing.

Rays leave the agent at angles heading + 2*pi*j/20 and report the
distance to the first wall face, capped at ray_max. The bearing is the
unit vector toward the goal expressed in the body frame (forward,
lateral); walls never occlude it.

Implementation: every maze exposes the set of wall faces adjacent to
free space (axis-aligned segments, precomputed once per maze); all 20
rays are intersected against all faces in one vectorized pass.
"""

from __future__ import annotations

import math

import numpy as np

N_RAYS = 20
_TWO_PI = 2.0 * math.pi
_RAY_FRACTIONS = np.arange(N_RAYS) * (_TWO_PI / N_RAYS)
_FACE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def exposed_faces(maze) -> tuple[np.ndarray, np.ndarray]:
    """Wall faces touching free space.

    Returns (vertical, horizontal): vertical rows are (x, y0, y1),
    horizontal rows are (y, x0, x1), in world units.
    """
    cached = _FACE_CACHE.get(id(maze))
    if cached is not None:
        return cached
    cs = maze.cell_size
    walls = maze.walls
    vert, horiz = [], []
    rows, cols = walls.shape
    for r in range(rows):
        for c in range(cols):
            if not walls[r, c]:
                continue
            if c > 0 and not walls[r, c - 1]:
                vert.append((c * cs, r * cs, (r + 1) * cs))
            if c + 1 < cols and not walls[r, c + 1]:
                vert.append(((c + 1) * cs, r * cs, (r + 1) * cs))
            if r > 0 and not walls[r - 1, c]:
                horiz.append((r * cs, c * cs, (c + 1) * cs))
            if r + 1 < rows and not walls[r + 1, c]:
                horiz.append(((r + 1) * cs, c * cs, (c + 1) * cs))
    out = (np.array(vert, dtype=np.float64).reshape(-1, 3),
           np.array(horiz, dtype=np.float64).reshape(-1, 3))
    _FACE_CACHE[id(maze)] = out
    return out


def raycast(position: np.ndarray, heading: float, maze, ray_max: float) -> np.ndarray:
    """Distances to the first wall along each of the 20 rays."""
    vert, horiz = exposed_faces(maze)
    angles = heading + _RAY_FRACTIONS
    dx = np.cos(angles)
    dy = np.sin(angles)
    px = float(position[0])
    py = float(position[1])
    dist = np.full(N_RAYS, ray_max)
    if len(vert):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (vert[:, 0][None, :] - px) / dx[:, None]
        y_hit = py + t * dy[:, None]
        ok = (np.isfinite(t) & (t >= 0.0)
              & (y_hit >= vert[:, 1][None, :]) & (y_hit <= vert[:, 2][None, :]))
        t = np.where(ok, t, np.inf)
        dist = np.minimum(dist, t.min(axis=1))
    if len(horiz):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (horiz[:, 0][None, :] - py) / dy[:, None]
        x_hit = px + t * dx[:, None]
        ok = (np.isfinite(t) & (t >= 0.0)
              & (x_hit >= horiz[:, 1][None, :]) & (x_hit <= horiz[:, 2][None, :]))
        t = np.where(ok, t, np.inf)
        dist = np.minimum(dist, t.min(axis=1))
    return dist


def goal_bearing(position: np.ndarray, heading: float, goal: np.ndarray | None) -> np.ndarray:
    """Unit vector to the goal in body coordinates (forward, lateral).

    Tasks without a goal report a zero vector.
    """
    if goal is None:
        return np.zeros(2)
    dx = float(goal[0]) - float(position[0])
    dy = float(goal[1]) - float(position[1])
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return np.zeros(2)
    c = math.cos(heading)
    s = math.sin(heading)
    return np.array([(c * dx + s * dy) / norm, (-s * dx + c * dy) / norm])
