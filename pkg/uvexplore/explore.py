"""
Exploration loop for a ground and an aerial agent sharing one
occupancy map, and its single-agent baselines.

Every step plans both agents against a frozen copy of the map:
frontiers are distributed between the corridors, goals are
selected and planned, aerial yaws optimized, and only then are
both paths executed and their scans integrated.
"""

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Optional,
    Sequence,
    Set,
    TextIO,
    Tuple,
    Union,
)

import numpy as np

from uvexplore.corridor import (
    Corridor,
    Distribution,
    distribute_frontiers,
    uav_corridor,
    ugv_corridor,
)
from uvexplore.frontiers import FrontierSet, batch_frontiers, update_frontiers
from uvexplore.goals import (
    cluster_frontiers,
    render_view_quality,
    select_uav_goal,
    select_ugv_goal,
)
from uvexplore.occupancy import (
    OccupancyMap,
    VoxelKey,
    coverage_stats,
    dump_map,
    from_states,
    integrate_scan,
    mark_free_box,
    new_map,
)
from uvexplore.optimize import (
    SoftVisibilityParams,
    hard_path_ig,
    optimize_path_yaw,
    unique_frontiers_seen,
)
from uvexplore.planner import RRTParams, densify, path_valid, plan_rrt
from uvexplore.sensors import (
    AgentSpec,
    default_uav,
    default_ugv,
    simulate_scan,
    start_poses,
)
from uvexplore.viewpoint import Path as ViewPath
from uvexplore.viewpoint import Viewpoint
from uvexplore.world import GroundTruthWorld, resolve_world

logger = logging.getLogger(__name__)

# team-shared skips frontier distribution: both agents see all of F
MODES = ("team", "team-shared", "uav", "ugv")

METRICS_HEADER = [
    "step",
    "agent",
    "goal_x",
    "goal_y",
    "goal_z",
    "path_len_m",
    "ig_before",
    "ig_after",
    "plan_time_s",
    "cov_free",
    "cov_occ",
    "cov_unknown",
    "frontier_count",
]
PATHS_HEADER = ["step", "agent", "x", "y", "z", "yaw"]


class ExplorationStatus(Enum):
    COMPLETE = "complete"
    BLOCKED = "blocked"
    MAX_STEPS = "max_steps"

    @property
    def exit_code(self) -> int:
        return _EXIT_CODES[self]


_EXIT_CODES = {
    ExplorationStatus.COMPLETE: 0,
    ExplorationStatus.BLOCKED: 2,
    ExplorationStatus.MAX_STEPS: 3,
}


@dataclass(frozen=True)
class ExplorationConfig:
    """
    Everything that determines a run. `world` is a voxel-world
    file or a generator reference such as `maze:3`; `mode`
    selects the team, the team without frontier distribution,
    or one of the single-agent baselines.
    """

    world: str = "maze:0"
    mode: str = "team"
    lam: float = 0.05
    n_r: int = 50
    epsilon: float = 1.0
    cluster_factor: int = 8
    spacing: float = 0.9
    max_steps: int = 200
    seed: int = 0
    threads: int = 1
    optimizer_iters: int = 100
    goal_attempts: int = 5
    stall_steps: int = 3
    rrt: RRTParams = field(default_factory=RRTParams)
    soft: SoftVisibilityParams = field(default_factory=SoftVisibilityParams)
    ugv: AgentSpec = field(default_factory=default_ugv)
    uav: AgentSpec = field(default_factory=default_uav)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"Unknown mode {self.mode}, expected {MODES}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.n_r < 1:
            raise ValueError(f"Rays per voxel must be positive: {self.n_r}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative: {self.epsilon}")
        if self.cluster_factor < 2 or self.cluster_factor & (
            self.cluster_factor - 1
        ):
            raise ValueError(
                f"Cluster factor must be a power of two >= 2, "
                f"got {self.cluster_factor}"
            )
        if not self.spacing > 0:
            raise ValueError(f"Spacing must be positive, got {self.spacing}")
        for name in ("max_steps", "threads", "goal_attempts", "stall_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.ugv.is_ground or self.uav.is_ground:
            raise ValueError("ugv must be a ground agent, uav an aerial one")

    @property
    def agents(self) -> Tuple[AgentSpec, ...]:
        if self.mode == "uav":
            return (self.uav,)
        if self.mode == "ugv":
            return (self.ugv,)
        return (self.ugv, self.uav)


@dataclass(frozen=True)
class AgentStep:
    """
    What one agent planned and executed in one step. `goal` and
    `path` are None when the agent found no goal.
    """

    agent: str
    goal: Optional[Viewpoint] = None
    path: Optional[ViewPath] = None
    ig_before: int = 0
    ig_after: int = 0
    plan_time: float = 0.0
    new_voxels: int = 0
    unique_seen: int = 0

    @property
    def path_length(self) -> float:
        return self.path.length if self.path is not None else 0.0


@dataclass(frozen=True)
class StepRecord:
    step: int
    agents: Tuple[AgentStep, ...]
    coverage: Tuple[float, float, float]
    frontier_count: int
    observed: int

    def agent(self, name: str) -> Optional[AgentStep]:
        for a in self.agents:
            if a.agent == name:
                return a
        return None


@dataclass
class ExplorationResult:
    status: ExplorationStatus
    records: List[StepRecord]
    omap: OccupancyMap
    config: ExplorationConfig

    def summary(self) -> Dict[str, Any]:
        free, occupied, unknown = coverage_stats(self.omap)
        agents = {}
        for agent in self.config.agents:
            steps = [r.agent(agent.name) for r in self.records]
            steps = [s for s in steps if s is not None]
            agents[agent.name] = {
                "goals": sum(s.goal is not None for s in steps),
                "path_length": sum(s.path_length for s in steps),
                "new_voxels": sum(s.new_voxels for s in steps),
                "unique_frontiers_seen": sum(s.unique_seen for s in steps),
            }
        return {
            "status": self.status.value,
            "mode": self.config.mode,
            "world": self.config.world,
            "seed": self.config.seed,
            "steps": len(self.records),
            "coverage": {
                "free": free,
                "occupied": occupied,
                "unknown": unknown,
            },
            "observed": [r.observed for r in self.records],
            "agents": agents,
        }


def derive_seed(*entropy: int) -> int:
    """Independent 32 bit seed for a sub-computation of a run"""
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


class _Exploration:
    """Mutable state of one run: the map, frontiers and agent poses"""

    def __init__(self, config: ExplorationConfig, world: GroundTruthWorld):
        self.config = config
        self.world = world
        self.agents = config.agents
        self.ugv = next((a for a in self.agents if a.is_ground), None)
        self.uav = next((a for a in self.agents if not a.is_ground), None)
        self.omap = new_map(world.bounds, world.resolution)
        self.poses = start_poses(world, self.agents)
        self.frontiers: Optional[FrontierSet] = None
        for agent in self.agents:
            pose = self.poses[agent.name]
            mark_free_box(self.omap, pose.position, agent.half_extents)
        for agent in self.agents:
            self.execute(agent, [self.poses[agent.name]])
        self.frontiers = batch_frontiers(self.omap)

    def execute(self, agent: AgentSpec, viewpoints: Sequence[Viewpoint]):
        """
        Scan from every viewpoint and integrate the scans in
        order. Returns the number of newly observed voxels and
        the number of voxel state changes.
        """
        if not viewpoints:
            return 0, 0

        def scan(q):
            return simulate_scan(self.world, agent.sensor, q)

        if self.config.threads > 1:
            with ThreadPoolExecutor(self.config.threads) as pool:
                scans = list(pool.map(scan, viewpoints))
        else:
            scans = [scan(q) for q in viewpoints]

        observed = int(self.omap.observed.sum())
        changes = 0
        for q, s in zip(viewpoints, scans):
            changed = integrate_scan(self.omap, q.position, s)
            changes += len(changed)
            if self.frontiers is not None:
                self.frontiers = update_frontiers(
                    self.frontiers, self.omap, changed
                )
        return int(self.omap.observed.sum()) - observed, changes

    def corridor(self, agent: AgentSpec, snapshot: OccupancyMap) -> Corridor:
        pose = self.poses[agent.name]
        if agent.is_ground:
            corridor = ugv_corridor(snapshot, agent, pose)
        else:
            corridor = uav_corridor(snapshot, agent, pose)
        logger.debug(f"{agent.name} corridor holds {len(corridor)} cells")
        return corridor

    def _path(
        self,
        snapshot: OccupancyMap,
        agent: AgentSpec,
        corridor: Corridor,
        goal: Viewpoint,
        seed: int,
    ) -> Optional[ViewPath]:
        q0 = self.poses[agent.name]
        path = plan_rrt(
            snapshot,
            agent,
            q0,
            goal,
            seed=seed,
            params=self.config.rrt,
            domain=corridor.bounding_box(),
        )
        if path is None:
            return None
        path = densify(path, self.config.spacing)
        if not path_valid(snapshot, agent, path):
            logger.debug(f"Densified {agent.name} path failed validation")
            return None
        return path

    def _finish(
        self,
        agent: AgentSpec,
        snapshot: OccupancyMap,
        goal: Viewpoint,
        path: ViewPath,
        start: float,
    ) -> AgentStep:
        before = hard_path_ig(snapshot, self.frontiers, agent.sensor, path)
        after = before
        if not agent.is_ground:
            path, after = optimize_path_yaw(
                path,
                snapshot,
                self.frontiers,
                agent,
                self.config.soft,
                self.config.optimizer_iters,
            )
        seen = unique_frontiers_seen(
            snapshot, self.frontiers, agent.sensor, path
        )
        return AgentStep(
            agent.name,
            goal,
            path,
            int(before.value),
            int(after.value),
            time.perf_counter() - start,
            unique_seen=seen,
        )

    def plan_ugv(
        self,
        snapshot: OccupancyMap,
        corridor: Corridor,
        targets: FrontierSet,
        step: int,
    ) -> AgentStep:
        agent, config = self.ugv, self.config
        start = time.perf_counter()
        q0 = self.poses[agent.name]
        image = render_view_quality(
            corridor,
            targets,
            snapshot,
            config.n_r,
            derive_seed(config.seed, step, 0),
            config.threads,
        )
        # a 360 degree sensor learns nothing new from its own cell
        exclude: Set[VoxelKey] = {snapshot.key(q0.position)}
        for attempt in range(config.goal_attempts):
            goal = select_ugv_goal(image, q0, config.lam, exclude)
            if goal is None:
                break
            seed = derive_seed(config.seed, step, 1, attempt)
            path = self._path(snapshot, agent, corridor, goal, seed)
            if path is not None:
                return self._finish(agent, snapshot, goal, path, start)
            logger.info(f"No path for {agent.name} to {goal}, reselecting")
            exclude.add(snapshot.key(goal.position))
        return AgentStep(agent.name, plan_time=time.perf_counter() - start)

    def plan_uav(
        self,
        snapshot: OccupancyMap,
        corridor: Corridor,
        targets: FrontierSet,
        step: int,
        ugv_goal: Optional[Viewpoint],
    ) -> AgentStep:
        agent, config = self.uav, self.config
        start = time.perf_counter()
        q0 = self.poses[agent.name]
        clusters = cluster_frontiers(targets, snapshot, config.cluster_factor)
        conflict_radius = config.cluster_factor * snapshot.resolution
        skip_clusters: Set[VoxelKey] = set()
        skip_cells: Set[VoxelKey] = set()
        failures = 0
        while failures < config.goal_attempts:
            goal = select_uav_goal(
                clusters,
                targets,
                corridor,
                snapshot,
                q0,
                config.lam,
                skip_clusters,
                skip_cells,
            )
            if goal is None:
                break
            if (
                ugv_goal is not None
                and goal.viewpoint.distance(ugv_goal) <= conflict_radius
            ):
                logger.debug(
                    f"Cluster {goal.cluster} conflicts with the ground "
                    "agent's goal, trying the next one"
                )
                skip_clusters.add(goal.cluster)
                continue
            seed = derive_seed(config.seed, step, 2, failures)
            path = self._path(snapshot, agent, corridor, goal.viewpoint, seed)
            if path is not None:
                return self._finish(
                    agent, snapshot, goal.viewpoint, path, start
                )
            logger.info(f"No path for {agent.name} to {goal.viewpoint}")
            failures += 1
            cell = (goal.viewpoint.as_array() - snapshot.origin) / (
                corridor.cell_size
            )
            skip_cells.add(VoxelKey(*map(int, np.floor(cell))))
        return AgentStep(agent.name, plan_time=time.perf_counter() - start)

    def assign(
        self,
        snapshot: OccupancyMap,
        ugv_corr: Optional[Corridor],
        uav_corr: Optional[Corridor],
    ) -> Distribution:
        if self.config.mode == "team-shared":
            return Distribution(self.frontiers, self.frontiers)
        return distribute_frontiers(
            self.frontiers, ugv_corr, uav_corr, snapshot, self.config.threads
        )

    def plan(self, step: int) -> Tuple[List[AgentStep], Dict[str, int]]:
        """
        Plan every agent against a frozen copy of the map. Also
        returns the number of frontiers each agent was given.
        """
        snapshot = self.omap.copy()
        corridors = {a.name: self.corridor(a, snapshot) for a in self.agents}
        ugv_corr = corridors.get(self.ugv.name) if self.ugv else None
        uav_corr = corridors.get(self.uav.name) if self.uav else None
        split = self.assign(snapshot, ugv_corr, uav_corr)
        logger.debug(
            f"Step {step}: {len(self.frontiers)} frontiers, "
            f"{len(split.ugv)} to the ground agent, "
            f"{len(split.uav)} to the aerial agent"
        )

        plans, assigned = [], {}
        ugv_goal = None
        if self.ugv is not None:
            plan = self.plan_ugv(snapshot, ugv_corr, split.ugv, step)
            ugv_goal = plan.goal
            plans.append(plan)
            assigned[self.ugv.name] = len(split.ugv)
        if self.uav is not None:
            plans.append(
                self.plan_uav(snapshot, uav_corr, split.uav, step, ugv_goal)
            )
            assigned[self.uav.name] = len(split.uav)
        return plans, assigned


def exploration_complete(
    plans: Sequence[AgentStep], assigned: Dict[str, int], epsilon: float
) -> bool:
    """
    True once every agent with a path sees at most `epsilon`
    frontiers along it and every agent without one was given
    no frontiers
    """
    for plan in plans:
        if plan.path is not None:
            if plan.ig_after > epsilon:
                return False
        elif assigned.get(plan.agent, 0):
            return False
    return True


def run_exploration(
    config: ExplorationConfig, world: Optional[GroundTruthWorld] = None
) -> ExplorationResult:
    """
    Explore `world` (or the world named by the config) until
    every planned path sees at most `epsilon` frontiers, no
    frontier is left, the agents are stuck, or `max_steps`
    planning steps have been taken
    """
    world = world or resolve_world(config.world)
    run = _Exploration(config, world)
    records: List[StepRecord] = []
    status, stalled = ExplorationStatus.MAX_STEPS, 0
    logger.info(
        f"Exploring {config.world} in {config.mode} mode, "
        f"map shape {run.omap.shape}, {len(run.frontiers)} frontiers"
    )

    for step in range(config.max_steps):
        if not len(run.frontiers):
            status = ExplorationStatus.COMPLETE
            break
        plans, assigned = run.plan(step)
        active = [p for p in plans if p.path is not None]
        if not active:
            logger.info(f"Step {step}: no agent found a goal")
            status = ExplorationStatus.BLOCKED
            break

        changes = 0
        executed = []
        for plan in plans:
            if plan.path is not None:
                agent = next(a for a in run.agents if a.name == plan.agent)
                new, changed = run.execute(agent, plan.path.viewpoints[1:])
                run.poses[agent.name] = plan.path.goal
                plan = replace(plan, new_voxels=new)
                changes += changed
            executed.append(plan)

        record = StepRecord(
            step,
            tuple(executed),
            coverage_stats(run.omap),
            len(run.frontiers),
            int(run.omap.observed.sum()),
        )
        records.append(record)
        logger.info(
            f"Step {step}: unknown {record.coverage[2]:.3f}, "
            f"{record.frontier_count} frontiers, "
            + ", ".join(
                f"{p.agent} IG {p.ig_before}->{p.ig_after}" for p in active
            )
        )

        if exploration_complete(plans, assigned, config.epsilon):
            status = ExplorationStatus.COMPLETE
            break
        stalled = 0 if changes else stalled + 1
        if stalled >= config.stall_steps:
            logger.info(f"No voxel changed in {stalled} steps, giving up")
            status = ExplorationStatus.BLOCKED
            break
    else:
        if not len(run.frontiers):
            status = ExplorationStatus.COMPLETE

    logger.info(
        f"Exploration finished: {status.value} after {len(records)} steps"
    )
    return ExplorationResult(status, records, run.omap, config)


def single_agent_baseline(
    config: ExplorationConfig,
    which: str,
    world: Optional[GroundTruthWorld] = None,
) -> ExplorationResult:
    """Run the exploration loop with only the `uav` or the `ugv`"""
    if which not in ("uav", "ugv"):
        raise ValueError(f"Baseline agent must be uav or ugv, got {which}")
    return run_exploration(replace(config, mode=which), world)


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_metrics(records: Sequence[StepRecord], f: TextIO) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for record in records:
        free, occupied, unknown = record.coverage
        for a in record.agents:
            goal = a.goal.position if a.goal else (None, None, None)
            writer.writerow(
                [record.step, a.agent]
                + [_fmt(c) for c in goal]
                + [
                    _fmt(a.path_length),
                    a.ig_before,
                    a.ig_after,
                    _fmt(a.plan_time),
                    _fmt(free),
                    _fmt(occupied),
                    _fmt(unknown),
                    record.frontier_count,
                ]
            )


def export_metrics(
    records: Sequence[StepRecord], path: Union[str, Path]
) -> None:
    """Write one CSV row per agent and step"""
    with open(path, "w", newline="") as f:
        write_metrics(records, f)


def read_metrics(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Parse a metrics CSV back into typed rows"""
    ints = {"step", "ig_before", "ig_after", "frontier_count"}
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != METRICS_HEADER:
            raise ValueError(f"Unexpected metrics header {reader.fieldnames}")
        for row in reader:
            parsed = {}
            for key, value in row.items():
                if key == "agent":
                    parsed[key] = value
                elif value == "":
                    parsed[key] = None
                elif key in ints:
                    parsed[key] = int(value)
                else:
                    parsed[key] = float(value)
            rows.append(parsed)
    return rows


def write_paths(records: Sequence[StepRecord], f: TextIO) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(PATHS_HEADER)
    for record in records:
        for a in record.agents:
            if a.path is None:
                continue
            for q in a.path:
                writer.writerow(
                    [record.step, a.agent]
                    + [_fmt(v) for v in (q.x, q.y, q.z, q.yaw)]
                )


def export_paths(
    records: Sequence[StepRecord], path: Union[str, Path]
) -> None:
    """Write the executed path polylines as CSV"""
    with open(path, "w", newline="") as f:
        write_paths(records, f)


def write_outputs(result: ExplorationResult, out: Union[str, Path]) -> None:
    """
    Write metrics.csv, paths.csv, map.voxw and summary.json
    for a finished run into the directory `out`
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    export_metrics(result.records, out / "metrics.csv")
    export_paths(result.records, out / "paths.csv")
    with open(out / "map.voxw", "wb") as f:
        dump_map(result.omap, f)
    with open(out / "summary.json", "w") as f:
        json.dump(result.summary(), f, indent=2)
    logger.info(f"Wrote exploration outputs to {out}")


def observable_voxels(
    world: GroundTruthWorld,
    agents: Sequence[AgentSpec],
    threads: int = 1,
) -> np.ndarray:
    """
    Voxels a perfect scan sweep can observe: every cell of every
    agent's corridor in the fully known world is scanned with
    enough headings to cover all azimuths

    Returns:
        Boolean grid with the world's shape
    """
    truth = from_states(world.occupied.astype(np.uint8), world.resolution)
    poses = start_poses(world, agents)
    seen = new_map(world.bounds, world.resolution)
    for agent in agents:
        pose = poses[agent.name]
        if agent.is_ground:
            corridor = ugv_corridor(truth, agent, pose)
        else:
            corridor = uav_corridor(truth, agent, pose)
        sensor = agent.sensor
        headings = 1
        if not sensor.omnidirectional:
            headings = int(math.ceil(2 * math.pi / sensor.fov_h - 1e-9))
        viewpoints = [
            Viewpoint(*map(float, c), 2 * math.pi * k / headings)
            for c in corridor.centers
            for k in range(headings)
        ]

        def scan(q):
            return simulate_scan(world, sensor, q)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                scans = list(pool.map(scan, viewpoints))
        else:
            scans = map(scan, viewpoints)
        for q, s in zip(viewpoints, scans):
            integrate_scan(seen, q.position, s)
        logger.debug(
            f"Swept {len(viewpoints)} {agent.name} viewpoints for "
            "the observable set"
        )
    return seen.observed.copy()


def steps_to_fraction(
    observed: Sequence[int], total: int, fraction: float = 0.9
) -> Optional[int]:
    """
    Number of planning steps until `fraction` of `total` voxels
    were observed, given the observed voxel count after every
    step, or None if the run never got there
    """
    for i, count in enumerate(observed):
        if count >= fraction * total:
            return i + 1
    return None
