"""Sampling-based motion planning and time parameterization.

The arm body is modelled as capsules swept along the five chain segments;
the world holds sphere and axis-aligned-box obstacles plus a clearance
margin. Two planners are provided: a goal-biased joint-space RRT and a lazy
probabilistic roadmap (edges are validated only when a candidate shortest
path crosses them). Paths are polished with random shortcutting and turned
into executable trajectories by a per-segment trapezoidal velocity profile
synchronized to the slowest joint.

Everything is deterministic for a fixed ``PlannerParams.rng_seed``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidEndpoint, NoPathFound
from .kinematics import ArmModel, as_joint_vector, chain_points_batch

LINK_RADIUS = 0.02  # m, capsule radius around every chain segment


@dataclass(frozen=True)
class Sphere:
    """Spherical obstacle."""

    center: np.ndarray  # (3,)
    radius: float

    def __post_init__(self):
        c = np.array(self.center, dtype=float)
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise ValueError("sphere center must be a finite 3-vector")
        if self.radius <= 0:
            raise ValueError("sphere radius must be > 0")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box obstacle."""

    lo: np.ndarray  # (3,)
    hi: np.ndarray  # (3,)

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ValueError("box must satisfy lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


@dataclass(frozen=True)
class World:
    """Obstacle set plus the clearance margin the planners must keep."""

    spheres: tuple[Sphere, ...] = ()
    boxes: tuple[Box, ...] = ()
    clearance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "spheres", tuple(self.spheres))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.clearance < 0:
            raise ValueError("clearance must be >= 0")


@dataclass(frozen=True)
class PlannerParams:
    """Shared planner knobs; defaults match the benchmark configuration."""

    rng_seed: int = 0
    step: float = 0.1  # rad, RRT extension step (joint-space L2)
    goal_bias: float = 0.1
    max_iters: int = 5000
    prm_samples: int = 500
    prm_neighbors: int = 10
    edge_resolution: float = 0.01  # rad, interpolation spacing for edge checks
    smooth_iters: int = 50

    def __post_init__(self):
        if self.step <= 0 or self.edge_resolution <= 0:
            raise ValueError("step and edge_resolution must be > 0")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.max_iters < 1 or self.prm_samples < 1 or self.prm_neighbors < 1:
            raise ValueError("iteration/sample counts must be >= 1")


# --------------------------------------------------------------------------
# clearance computation
# --------------------------------------------------------------------------


def _point_box_dist(p: np.ndarray, box: Box) -> np.ndarray:
    """Distance from points (..., 3) to a box."""
    return np.linalg.norm(np.clip(p, box.lo, box.hi) - p, axis=-1)


def _segment_box_min(a: np.ndarray, d: np.ndarray, box: Box, iters: int = 48) -> np.ndarray:
    """Exact min distance from segments a + t*d (t in [0,1]) to a box.

    The distance of a moving point to a convex set is convex in t, so a
    ternary search converges to the true minimum. Both probes per iteration
    are evaluated in one vectorized call.
    """
    k = a.shape[0]
    lo_t = np.zeros(k)
    hi_t = np.ones(k)
    for _ in range(iters):
        third = (hi_t - lo_t) / 3.0
        ts = np.stack([lo_t + third, hi_t - third])  # (2, K)
        p = a[None, :, :] + ts[..., None] * d[None, :, :]
        f = _point_box_dist(p, box)
        shrink_hi = f[0] < f[1]
        hi_t = np.where(shrink_hi, ts[1], hi_t)
        lo_t = np.where(shrink_hi, lo_t, ts[0])
    mid = 0.5 * (lo_t + hi_t)
    return _point_box_dist(a + mid[:, None] * d, box)


def _segment_box_below(
    a: np.ndarray, d: np.ndarray, box: Box, thr: float, max_iters: int = 64
) -> np.ndarray:
    """Per-segment flags: does min distance to the box drop below ``thr``?

    Same ternary recursion as ``_segment_box_min`` but with certified early
    exits: a probe below ``thr`` decides a hit immediately, and once the
    Lipschitz cone over the remaining interval cannot reach ``thr`` the
    segment is certified clear. Most pairs settle within a few iterations.
    """
    k = a.shape[0]
    lo_t = np.zeros(k)
    hi_t = np.ones(k)
    seg_len = np.linalg.norm(d, axis=-1)
    result = np.zeros(k, dtype=bool)
    active = np.arange(k)

    for _ in range(max_iters):
        third = (hi_t - lo_t) / 3.0
        ts = np.stack([lo_t + third, hi_t - third])
        p = a[active][None, :, :] + ts[..., None] * d[active][None, :, :]
        f = _point_box_dist(p, box)
        fmin = np.minimum(f[0], f[1])

        hit = fmin < thr
        result[active[hit]] = True
        clear = fmin - (hi_t - lo_t) * seg_len[active] >= thr
        keep = ~(hit | clear)
        if not np.any(keep):
            return result

        shrink_hi = f[0] < f[1]
        hi_t = np.where(shrink_hi, ts[1], hi_t)[keep]
        lo_t = np.where(shrink_hi, lo_t, ts[0])[keep]
        active = active[keep]

    mid = 0.5 * (lo_t + hi_t)
    p = a[active] + mid[:, None] * d[active]
    result[active] = _point_box_dist(p, box) < thr
    return result


def min_clearance_batch(arm: ArmModel, Q: np.ndarray, world: World) -> np.ndarray:
    """Worst-case surface distance for each config in an (N, 5) batch.

    Returns, per config, the minimum over all capsule/obstacle pairs of
    (centerline distance - capsule radius - obstacle extent). Negative
    values mean penetration. ``world.clearance`` is *not* subtracted here;
    collision predicates apply it on top.
    """
    Q = np.asarray(Q, dtype=float)
    pts = chain_points_batch(arm, Q)
    a = pts[:, :-1, :]  # (N, 5, 3) segment starts
    d = pts[:, 1:, :] - a  # (N, 5, 3) segment vectors
    dd = np.einsum("nsk,nsk->ns", d, d)
    safe_dd = np.where(dd > 0.0, dd, 1.0)
    seg_len = np.sqrt(dd)

    best = np.full(Q.shape[0], np.inf)

    for sph in world.spheres:
        w = sph.center - a
        t = np.clip(np.einsum("nsk,nsk->ns", w, d) / safe_dd, 0.0, 1.0)
        closest = a + t[..., None] * d
        dist = np.linalg.norm(closest - sph.center, axis=-1) - sph.radius - LINK_RADIUS
        best = np.minimum(best, dist.min(axis=1))

    for box in world.boxes:
        # Endpoint distances give a 1-Lipschitz sandwich on the interior:
        # ub = min(d0, d1) >= true min >= (d0 + d1 - len) / 2 = lb. Only
        # segments whose lb undercuts the per-config ub can hold the true
        # minimum, so the ternary search runs on that subset alone.
        d0 = _point_box_dist(a, box)
        d1 = _point_box_dist(pts[:, 1:, :], box)
        ub = np.minimum(d0, d1)
        lb = 0.5 * (d0 + d1 - seg_len)
        ub_cfg = ub.min(axis=1, keepdims=True)
        need = lb < ub_cfg
        dist = lb.copy()
        if np.any(need):
            idx = np.nonzero(need)
            dist[idx] = _segment_box_min(a[idx], d[idx], box)
        best = np.minimum(best, dist.min(axis=1) - LINK_RADIUS)

    return best


def min_clearance(arm: ArmModel, q: np.ndarray, world: World) -> float:
    """Scalar ``min_clearance_batch`` for a single configuration."""
    return float(min_clearance_batch(arm, as_joint_vector(q)[None, :], world)[0])


def below_mask(arm: ArmModel, Q: np.ndarray, world: World, threshold: float) -> np.ndarray:
    """Per-config flags: clearance < threshold for an (N, 5) batch.

    Equivalent to ``min_clearance_batch(...) < threshold`` but much cheaper:
    the Lipschitz endpoint bounds decide almost every segment/box pair
    outright and the ternary search only refines the ambiguous rest.
    """
    Q = np.asarray(Q, dtype=float)
    pts = chain_points_batch(arm, Q)
    a = pts[:, :-1, :]
    b = pts[:, 1:, :]
    d = b - a
    dd = np.einsum("nsk,nsk->ns", d, d)
    safe_dd = np.where(dd > 0.0, dd, 1.0)
    below = np.zeros(Q.shape[0], dtype=bool)

    for sph in world.spheres:
        w = sph.center - a
        t = np.clip(np.einsum("nsk,nsk->ns", w, d) / safe_dd, 0.0, 1.0)
        closest = a + t[..., None] * d
        dist = np.linalg.norm(closest - sph.center, axis=-1) - sph.radius - LINK_RADIUS
        below |= np.any(dist < threshold, axis=1)
        if below.all():
            return below

    thr = threshold + LINK_RADIUS
    for box in world.boxes:
        d0 = _point_box_dist(a, box)
        d1 = _point_box_dist(b, box)
        below |= np.any(np.minimum(d0, d1) < thr, axis=1)
        lb = 0.5 * (d0 + d1 - np.sqrt(dd))
        need = (lb < thr) & ~below[:, None]
        if np.any(need):
            idx = np.nonzero(need)
            hit = _segment_box_below(a[idx], d[idx], box, thr)
            below[idx[0][hit]] = True
        if below.all():
            return below
    return below


def clearance_below(arm: ArmModel, Q: np.ndarray, world: World, threshold: float) -> bool:
    """True when any config in the (N, 5) batch has clearance < threshold."""
    return bool(np.any(below_mask(arm, Q, world, threshold)))


def config_collides(arm: ArmModel, q: np.ndarray, world: World) -> bool:
    return clearance_below(arm, as_joint_vector(q)[None, :], world, world.clearance)


def edge_configs(q_a: np.ndarray, q_b: np.ndarray, resolution: float) -> np.ndarray:
    """Inclusive interpolation of a straight joint-space edge, L2 spacing <= resolution."""
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    n = int(math.ceil(float(np.linalg.norm(q_b - q_a)) / resolution)) + 1
    return np.linspace(q_a, q_b, max(n, 2))


def edge_collides(
    arm: ArmModel, q_a: np.ndarray, q_b: np.ndarray, world: World, resolution: float
) -> bool:
    Q = edge_configs(q_a, q_b, resolution)
    return clearance_below(arm, Q, world, world.clearance)


def path_valid(
    arm: ArmModel,
    path: Sequence[np.ndarray],
    world: World,
    resolution: float = 0.002,
    margin: float = 0.0,
) -> bool:
    """Dense revalidation of a whole path, default finer than planner edges."""
    for q_a, q_b in zip(path[:-1], path[1:]):
        Q = edge_configs(q_a, q_b, resolution)
        if clearance_below(arm, Q, world, margin):
            return False
    return True


# --------------------------------------------------------------------------
# planners
# --------------------------------------------------------------------------


def _check_endpoints(arm: ArmModel, start: np.ndarray, goal: np.ndarray, world: World):
    if not arm.within_limits(start, tol=1e-12) or not arm.within_limits(goal, tol=1e-12):
        raise InvalidEndpoint("start and goal must lie within joint limits")
    if config_collides(arm, start, world):
        raise InvalidEndpoint("start configuration is in collision")
    if config_collides(arm, goal, world):
        raise InvalidEndpoint("goal configuration is in collision")


def shortcut_path(
    arm: ArmModel,
    path: list[np.ndarray],
    world: World,
    params: PlannerParams,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Random shortcutting: splice out detours whose direct edge is free."""
    path = list(path)
    for _ in range(params.smooth_iters):
        if len(path) < 3:
            break
        i = int(rng.integers(0, len(path) - 2))
        j = int(rng.integers(i + 2, len(path)))
        if not edge_collides(arm, path[i], path[j], world, params.edge_resolution):
            path = path[: i + 1] + path[j:]
    return path


def plan_rrt(
    arm: ArmModel,
    start: np.ndarray,
    goal: np.ndarray,
    world: World,
    params: PlannerParams = PlannerParams(),
) -> list[np.ndarray]:
    """Bidirectional RRT with greedy connect-style extension.

    Trees grow from both endpoints. Each iteration extends one tree toward
    a uniform sample by marching in ``step`` increments for as long as the
    straight line stays free (one vectorized clearance call per march),
    then greedily connects the other tree toward the reached tip; the trees
    swap roles every iteration. Raises ``NoPathFound`` on failure.
    """
    start = as_joint_vector(start)
    goal = as_joint_vector(goal)
    _check_endpoints(arm, start, goal, world)
    rng = np.random.default_rng(params.rng_seed)

    if not edge_collides(arm, start, goal, world, params.edge_resolution):
        return shortcut_path(arm, [start, goal], world, params, rng)

    per_step = max(1, int(round(params.step / params.edge_resolution)))

    def march(q_from: np.ndarray, q_to: np.ndarray) -> tuple[list[np.ndarray], bool]:
        """Step-spaced configs along the free prefix of q_from -> q_to,
        and whether the far end was reached."""
        if float(np.linalg.norm(q_to - q_from)) < 1e-12:
            return [], True
        configs = edge_configs(q_from, q_to, params.edge_resolution)
        # evaluate in chunks so marches blocked early stay cheap
        chunk = 64
        last_free = 0
        for base in range(1, len(configs), chunk):
            blocked = below_mask(arm, configs[base : base + chunk], world, world.clearance)
            hits = np.flatnonzero(blocked)
            if hits.size:
                last_free = base + int(hits[0]) - 1
                break
            last_free = base + len(blocked) - 1
        if last_free < 1:
            return [], False
        picks = list(range(per_step, last_free + 1, per_step))
        if not picks or picks[-1] != last_free:
            picks.append(last_free)
        return [configs[i] for i in picks], last_free == len(configs) - 1

    class _Tree:
        def __init__(self, root: np.ndarray):
            self.nodes = np.empty((256, 5))
            self.nodes[0] = root
            self.parents = [-1]
            self.count = 1

        def nearest(self, q: np.ndarray) -> int:
            diffs = self.nodes[: self.count] - q
            return int(np.argmin(np.einsum("ij,ij->i", diffs, diffs)))

        def grow(self, target: np.ndarray) -> tuple[int, bool]:
            """Greedy extension from the node nearest ``target`` toward it;
            returns (tip index, reached)."""
            near = self.nearest(target)
            added, reached = march(self.nodes[near], target)
            if self.count + len(added) > len(self.nodes):
                self.nodes = np.resize(self.nodes, (2 * (self.count + len(added)), 5))
            parent = near
            for cfg in added:
                self.nodes[self.count] = cfg
                self.parents.append(parent)
                parent = self.count
                self.count += 1
            return parent, reached

        def chain(self, tip: int) -> list[np.ndarray]:
            out = []
            while tip >= 0:
                out.append(self.nodes[tip].copy())
                tip = self.parents[tip]
            return out

    tree_a, tree_b = _Tree(start), _Tree(goal)
    a_is_start = True

    for _ in range(params.max_iters):
        if rng.random() < params.goal_bias:
            q_rand = tree_b.nodes[0]  # bias toward the other tree's root
        else:
            q_rand = rng.uniform(arm.lower_limits, arm.upper_limits)
        tip_a, _ = tree_a.grow(q_rand)
        bridge = tree_a.nodes[tip_a]
        tip_b, joined = tree_b.grow(bridge)
        if joined:
            half_a = tree_a.chain(tip_a)[::-1]  # root ... bridge
            half_b = tree_b.chain(tip_b)  # bridge ... root
            path = half_a + half_b[1:]
            if not a_is_start:
                path.reverse()
            return shortcut_path(arm, path, world, params, rng)
        tree_a, tree_b = tree_b, tree_a
        a_is_start = not a_is_start

    raise NoPathFound(f"rrt exhausted {params.max_iters} iterations")


def plan_prm(
    arm: ArmModel,
    start: np.ndarray,
    goal: np.ndarray,
    world: World,
    params: PlannerParams = PlannerParams(),
) -> list[np.ndarray]:
    """Lazy PRM: build roadmap by k-nearest neighbours, validate edges only
    when a shortest path wants them. Raises ``NoPathFound`` on failure."""
    start = as_joint_vector(start)
    goal = as_joint_vector(goal)
    _check_endpoints(arm, start, goal, world)
    rng = np.random.default_rng(params.rng_seed)

    if not edge_collides(arm, start, goal, world, params.edge_resolution):
        return shortcut_path(arm, [start, goal], world, params, rng)

    samples: list[np.ndarray] = []
    attempts = 0
    while len(samples) < params.prm_samples:
        attempts += 1
        if attempts > 200:
            raise NoPathFound("could not sample enough free configurations")
        batch = rng.uniform(
            arm.lower_limits, arm.upper_limits, size=(params.prm_samples, 5)
        )
        free = ~below_mask(arm, batch, world, world.clearance)
        samples.extend(batch[free])
    nodes = np.vstack([start[None, :], goal[None, :], np.array(samples[: params.prm_samples])])
    n = nodes.shape[0]

    # symmetric k-nearest-neighbour adjacency; edges start out "assumed free"
    deltas = nodes[:, None, :] - nodes[None, :, :]
    dmat = np.sqrt(np.einsum("ijk,ijk->ij", deltas, deltas))
    np.fill_diagonal(dmat, np.inf)
    k = min(params.prm_neighbors, n - 1)
    neighbor_idx = np.argpartition(dmat, k - 1, axis=1)[:, :k]

    adj: dict[int, dict[int, float]] = {i: {} for i in range(n)}
    for i in range(n):
        for j in neighbor_idx[i]:
            j = int(j)
            w = float(dmat[i, j])
            adj[i][j] = w
            adj[j][i] = w

    checked_ok: set[tuple[int, int]] = set()

    def astar() -> list[int] | None:
        g = {0: 0.0}
        came: dict[int, int] = {}
        h0 = float(np.linalg.norm(nodes[0] - nodes[1]))
        open_heap: list[tuple[float, float, int]] = [(h0, 0.0, 0)]
        closed: set[int] = set()
        while open_heap:
            f, _, u = heapq.heappop(open_heap)
            if u in closed:
                continue
            if u == 1:
                seq = [1]
                while seq[-1] != 0:
                    seq.append(came[seq[-1]])
                seq.reverse()
                return seq
            closed.add(u)
            for v, w in adj[u].items():
                if v in closed:
                    continue
                cand = g[u] + w
                if cand < g.get(v, math.inf):
                    g[v] = cand
                    came[v] = u
                    h = float(np.linalg.norm(nodes[v] - nodes[1]))
                    heapq.heappush(open_heap, (cand + h, cand, v))
        return None

    while True:
        seq = astar()
        if seq is None:
            raise NoPathFound("prm roadmap does not connect start and goal")
        all_ok = True
        for u, v in zip(seq[:-1], seq[1:]):
            key = (min(u, v), max(u, v))
            if key in checked_ok:
                continue
            if edge_collides(arm, nodes[u], nodes[v], world, params.edge_resolution):
                adj[u].pop(v, None)
                adj[v].pop(u, None)
                all_ok = False
                break
            checked_ok.add(key)
        if all_ok:
            path = [nodes[i].copy() for i in seq]
            return shortcut_path(arm, path, world, params, rng)


PLANNERS = {"rrt": plan_rrt, "prm": plan_prm}


def plan(
    arm: ArmModel,
    start: np.ndarray,
    goal: np.ndarray,
    world: World,
    params: PlannerParams = PlannerParams(),
    method: str = "rrt",
) -> list[np.ndarray]:
    try:
        planner = PLANNERS[method]
    except KeyError:
        raise ValueError(f"unknown planner {method!r}; choose from {sorted(PLANNERS)}")
    return planner(arm, start, goal, world, params)


# --------------------------------------------------------------------------
# time parameterization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Segment:
    t0: float
    duration: float
    q_a: np.ndarray  # (5,)
    sign: np.ndarray  # (5,)
    dist: np.ndarray  # (5,)
    v_peak: np.ndarray  # (5,)
    t_acc: np.ndarray  # (5,)
    accel: np.ndarray  # (5,)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise trapezoidal joint trajectory through a waypoint path.

    Every joint of a segment starts and ends at rest and all joints of a
    segment finish simultaneously (synchronized to the slowest joint).
    """

    waypoints: np.ndarray  # (M, 5)
    segments: tuple[_Segment, ...]

    @property
    def duration(self) -> float:
        if not self.segments:
            return 0.0
        last = self.segments[-1]
        return last.t0 + last.duration

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Joint positions and velocities at time ``t`` (clamped to range)."""
        if not self.segments:
            return self.waypoints[0].copy(), np.zeros(5)
        t = min(max(t, 0.0), self.duration)
        idx = 0
        for i, seg in enumerate(self.segments):
            if t <= seg.t0 + seg.duration:
                idx = i
                break
        else:
            idx = len(self.segments) - 1
        seg = self.segments[idx]
        tau = t - seg.t0

        a = seg.accel
        t_dec_start = seg.duration - seg.t_acc
        s = np.empty(5)
        v = np.empty(5)
        for j in range(5):
            if seg.dist[j] == 0.0:
                s[j] = 0.0
                v[j] = 0.0
            elif tau < seg.t_acc[j]:
                s[j] = 0.5 * a[j] * tau * tau
                v[j] = a[j] * tau
            elif tau < t_dec_start[j]:
                s[j] = 0.5 * a[j] * seg.t_acc[j] ** 2 + seg.v_peak[j] * (tau - seg.t_acc[j])
                v[j] = seg.v_peak[j]
            else:
                rem = max(seg.duration - tau, 0.0)
                s[j] = seg.dist[j] - 0.5 * a[j] * rem * rem
                v[j] = a[j] * rem
        return seg.q_a + seg.sign * s, seg.sign * v

    def sample_grid(self, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense (times, positions, velocities) arrays at spacing ``dt``."""
        n = int(math.floor(self.duration / dt)) + 1
        times = np.arange(n) * dt
        if times.size == 0 or times[-1] < self.duration:
            times = np.append(times, self.duration)
        qs = np.empty((times.size, 5))
        vs = np.empty((times.size, 5))
        for i, t in enumerate(times):
            qs[i], vs[i] = self.sample(float(t))
        return times, qs, vs


def time_parameterize(
    arm: ArmModel, path: Sequence[np.ndarray], speed_scale: float = 1.0
) -> Trajectory:
    """Trapezoidal velocity profile over a waypoint path.

    Per segment, the duration is set by the slowest joint at its (scaled)
    velocity/acceleration limits; the other joints stretch their peak
    velocity to arrive at the same instant. ``speed_scale`` derates both
    limits uniformly.
    """
    if not 0.0 < speed_scale <= 1.0:
        raise ValueError("speed_scale must lie in (0, 1]")
    wps = [as_joint_vector(q) for q in path]
    if not wps:
        raise ValueError("path must contain at least one waypoint")
    # drop zero-length segments
    dedup = [wps[0]]
    for q in wps[1:]:
        if not np.array_equal(q, dedup[-1]):
            dedup.append(q)

    v_max = arm.max_velocities * speed_scale
    a_max = arm.max_accelerations * speed_scale
    segments = []
    t0 = 0.0
    for q_a, q_b in zip(dedup[:-1], dedup[1:]):
        delta = q_b - q_a
        dist = np.abs(delta)
        sign = np.sign(delta)

        # minimal per-joint time: trapezoid if the velocity cap binds,
        # otherwise a triangular profile
        with np.errstate(divide="ignore", invalid="ignore"):
            t_trap = dist / v_max + v_max / a_max
            t_tri = 2.0 * np.sqrt(dist / a_max)
        t_min = np.where(dist > v_max * v_max / a_max, t_trap, t_tri)
        duration = float(np.max(np.where(dist > 0.0, t_min, 0.0)))

        # stretch each joint's peak velocity so it finishes exactly at
        # ``duration``: v^2/a - v*T + d = 0, take the lower root
        disc = np.maximum(a_max * a_max * duration * duration - 4.0 * a_max * dist, 0.0)
        v_peak = 0.5 * (a_max * duration - np.sqrt(disc))
        v_peak = np.where(dist > 0.0, v_peak, 0.0)
        t_acc = v_peak / a_max

        segments.append(
            _Segment(
                t0=t0,
                duration=duration,
                q_a=q_a,
                sign=sign,
                dist=dist,
                v_peak=v_peak,
                t_acc=t_acc,
                accel=a_max.copy(),
            )
        )
        t0 += duration

    return Trajectory(waypoints=np.array(dedup), segments=tuple(segments))
