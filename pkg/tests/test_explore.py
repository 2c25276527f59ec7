import csv
import io
import json

import numpy as np
import pytest

from uvexplore.explore import (
    METRICS_HEADER,
    PATHS_HEADER,
    AgentStep,
    ExplorationConfig,
    ExplorationStatus,
    derive_seed,
    exploration_complete,
    export_metrics,
    observable_voxels,
    read_metrics,
    run_exploration,
    single_agent_baseline,
    steps_to_fraction,
    write_metrics,
    write_outputs,
    write_paths,
)
from uvexplore.frontiers import batch_frontiers
from uvexplore.occupancy import OccupancyState, from_states, load_map
from uvexplore.planner import is_state_valid, path_valid
from uvexplore.sensors import default_uav, default_ugv
from uvexplore.viewpoint import Path, Viewpoint
from uvexplore.world import generate_maze


@pytest.fixture
def make_config(ugv, uav):
    def make(**kwargs):
        params = dict(world="room", max_steps=30, n_r=20, ugv=ugv, uav=uav)
        params.update(kwargs)
        return ExplorationConfig(**params)

    return make


@pytest.fixture
def team_run(make_config, room_world):
    return run_exploration(make_config(), room_world)


def metrics_rows(result):
    f = io.StringIO()
    write_metrics(result.records, f)
    rows = list(csv.DictReader(io.StringIO(f.getvalue())))
    for row in rows:
        row.pop("plan_time_s")
    return rows


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(mode="swarm"),
        dict(lam=-0.1),
        dict(n_r=0),
        dict(epsilon=-1.0),
        dict(cluster_factor=6),
        dict(spacing=0.0),
        dict(max_steps=0),
        dict(goal_attempts=0),
    ],
)
def test_config_validation(make_config, kwargs):
    with pytest.raises(ValueError):
        make_config(**kwargs)


def test_config_agents(make_config, ugv, uav):
    assert make_config().agents == (ugv, uav)
    assert make_config(mode="uav").agents == (uav,)
    assert make_config(mode="ugv").agents == (ugv,)
    assert make_config(mode="team-shared").agents == (ugv, uav)
    with pytest.raises(ValueError):
        make_config(ugv=default_uav())


def test_exit_codes():
    assert ExplorationStatus.COMPLETE.exit_code == 0
    assert ExplorationStatus.BLOCKED.exit_code == 2
    assert ExplorationStatus.MAX_STEPS.exit_code == 3


def test_derive_seed():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    seeds = {derive_seed(0, step, k) for step in range(20) for k in range(3)}
    assert len(seeds) == 60
    assert all(0 <= s < 2**32 for s in seeds)


def test_team_explores_room(team_run, room_world):
    result = team_run
    assert result.status is not ExplorationStatus.MAX_STEPS
    assert len(result.records) >= 1

    interior = result.omap.states[1:-1, 1:-1, 1:-1]
    assert np.mean(interior == OccupancyState.UNKNOWN) < 0.2
    # the closed interior is empty
    assert not np.any(interior == OccupancyState.OCCUPIED)

    unknown = [r.coverage[2] for r in result.records]
    assert all(a >= b for a, b in zip(unknown, unknown[1:]))
    observed = [r.observed for r in result.records]
    assert all(a <= b for a, b in zip(observed, observed[1:]))

    truth = from_states(
        room_world.occupied.astype(np.uint8), room_world.resolution
    )
    specs = {a.name: a for a in result.config.agents}
    for record in result.records:
        assert [a.agent for a in record.agents] == ["ugv", "uav"]
        for step in record.agents:
            if step.path is None:
                continue
            assert step.ig_after >= step.ig_before
            for q in step.path:
                assert is_state_valid(truth, specs[step.agent], q)


def test_run_is_reproducible(make_config, room_world):
    config = make_config(max_steps=3, seed=11)
    a = run_exploration(config, room_world)
    b = run_exploration(config, room_world)
    threaded = make_config(max_steps=3, seed=11, threads=3)
    c = run_exploration(threaded, room_world)
    assert metrics_rows(a) == metrics_rows(b) == metrics_rows(c)
    np.testing.assert_array_equal(a.omap.states, c.omap.states)


def test_ground_agent_alone_misses_the_ceiling(make_config, room_world):
    result = single_agent_baseline(make_config(max_steps=5), "ugv", room_world)
    assert result.config.mode == "ugv"
    for record in result.records:
        assert [a.agent for a in record.agents] == ["ugv"]
    ceiling = result.omap.states[1:-1, 1:-1, -2]
    assert np.all(ceiling == OccupancyState.UNKNOWN)

    with pytest.raises(ValueError):
        single_agent_baseline(make_config(), "team", room_world)


def test_no_goal_blocks(monkeypatch, make_config, room_world):
    monkeypatch.setattr(
        "uvexplore.explore.select_ugv_goal", lambda *args, **kwargs: None
    )
    monkeypatch.setattr(
        "uvexplore.explore.select_uav_goal", lambda *args, **kwargs: None
    )
    result = run_exploration(make_config(), room_world)
    assert result.status is ExplorationStatus.BLOCKED
    assert result.records == []
    assert result.summary()["steps"] == 0


def test_step_budget(make_config):
    world = generate_maze(1, cells_x=3, cells_y=3)
    result = run_exploration(make_config(max_steps=1), world)
    assert result.status is ExplorationStatus.MAX_STEPS
    assert len(result.records) == 1


def test_metrics_file(team_run, tmp_path):
    f = io.StringIO()
    write_metrics([], f)
    assert f.getvalue() == ",".join(METRICS_HEADER) + "\n"

    path = tmp_path / "metrics.csv"
    export_metrics(team_run.records, path)
    rows = read_metrics(path)
    assert len(rows) == 2 * len(team_run.records)
    steps = [a for r in team_run.records for a in r.agents]
    for row, record_step in zip(rows, steps):
        assert row["agent"] == record_step.agent
        assert row["ig_before"] == record_step.ig_before
        assert row["ig_after"] == record_step.ig_after
        if record_step.goal is None:
            assert row["goal_x"] is None
        else:
            assert row["goal_x"] == record_step.goal.x
            assert row["path_len_m"] == record_step.path_length

    path.write_text("step,agent\n0,ugv\n")
    with pytest.raises(ValueError):
        read_metrics(path)


def test_paths_file(team_run):
    f = io.StringIO()
    write_paths(team_run.records, f)
    lines = f.getvalue().splitlines()
    assert lines[0] == ",".join(PATHS_HEADER)
    total = sum(
        len(a.path)
        for r in team_run.records
        for a in r.agents
        if a.path is not None
    )
    assert len(lines) == total + 1


def test_write_outputs(team_run, tmp_path):
    out = tmp_path / "run"
    write_outputs(team_run, out)
    for name in ("metrics.csv", "paths.csv", "map.voxw", "summary.json"):
        assert (out / name).exists()

    summary = json.loads((out / "summary.json").read_text())
    assert summary == team_run.summary()
    assert summary["status"] == team_run.status.value
    assert summary["steps"] == len(team_run.records)
    assert set(summary["agents"]) == {"ugv", "uav"}
    assert set(summary["coverage"]) == {"free", "occupied", "unknown"}

    stored = load_map(out / "map.voxw")
    np.testing.assert_array_equal(stored.states, team_run.omap.states)


def test_steps_to_fraction():
    assert steps_to_fraction([10, 50, 95, 99], 100) == 3
    assert steps_to_fraction([10, 50, 95, 99], 100, 0.1) == 1
    assert steps_to_fraction([10, 20], 100) is None
    assert steps_to_fraction([], 100) is None


def test_observable_voxels(room_world, ugv, uav):
    ground = observable_voxels(room_world, [ugv])
    team = observable_voxels(room_world, [ugv, uav], threads=2)
    assert team.shape == room_world.shape
    assert team.dtype == bool
    assert np.all(team[ground])
    assert team.sum() > ground.sum()
    assert not ground[1:-1, 1:-1, -2].any()
    assert team[1:-1, 1:-1, -2].any()


def test_shared_mode_gives_every_frontier_to_both(
    monkeypatch, make_config, room_world
):
    def no_distribution(*args, **kwargs):
        raise AssertionError("frontiers were distributed")

    given = {"ugv": [], "uav": []}

    def recorder(name, func, index):
        def wrapped(*args, **kwargs):
            targets, snapshot = args[index], args[index + 1]
            given[name].append(
                targets.keys == batch_frontiers(snapshot).keys
            )
            return func(*args, **kwargs)

        return wrapped

    import uvexplore.explore as explore

    monkeypatch.setattr(explore, "distribute_frontiers", no_distribution)
    monkeypatch.setattr(
        explore,
        "render_view_quality",
        recorder("ugv", explore.render_view_quality, 1),
    )
    monkeypatch.setattr(
        explore,
        "cluster_frontiers",
        recorder("uav", explore.cluster_frontiers, 0),
    )
    result = run_exploration(make_config(mode="team-shared", max_steps=2), room_world)
    assert result.config.mode == "team-shared"
    assert len(result.records) >= 1
    assert given["ugv"] and all(given["ugv"])
    assert given["uav"] and all(given["uav"])


def test_exploration_complete():
    path = Path((Viewpoint(1, 1, 1), Viewpoint(2, 1, 1)))
    done = AgentStep("ugv", path.goal, path, ig_before=3, ig_after=1)
    busy = AgentStep("ugv", path.goal, path, ig_before=3, ig_after=2)
    stuck = AgentStep("uav")

    assert exploration_complete([done], {"ugv": 4}, 1.0)
    assert not exploration_complete([busy], {"ugv": 4}, 1.0)
    # an agent without a path still holds frontiers
    assert not exploration_complete([done, stuck], {"ugv": 4, "uav": 3}, 1.0)
    assert exploration_complete([done, stuck], {"ugv": 4, "uav": 0}, 1.0)
    assert exploration_complete([], {}, 0.0)


MAZE_SEEDS = [1, 2, 3, 4, 5]


@pytest.fixture(scope="module")
def maze_runs():
    """Team and aerial-only runs over small seeded mazes"""
    ugv, uav = default_ugv(rays_h=180, rays_v=12), default_uav(48, 36)
    runs = {}
    for seed in MAZE_SEEDS:
        world = generate_maze(seed, cells_x=3, cells_y=3)
        config = ExplorationConfig(
            world=f"maze:{seed}",
            n_r=20,
            epsilon=0.0,
            max_steps=40,
            seed=seed,
            ugv=ugv,
            uav=uav,
        )
        runs[seed] = {
            "world": world,
            "team": run_exploration(config, world),
            "uav": single_agent_baseline(config, "uav", world),
            "observable": observable_voxels(world, config.agents),
        }
    return runs


def test_maze_paths_are_valid(maze_runs):
    for run in maze_runs.values():
        world = run["world"]
        truth = from_states(
            world.occupied.astype(np.uint8), world.resolution
        )
        for mode in ("team", "uav"):
            result = run[mode]
            specs = {a.name: a for a in result.config.agents}
            for record in result.records:
                for step in record.agents:
                    if step.path is not None:
                        agent = specs[step.agent]
                        assert path_valid(truth, agent, step.path)


def test_team_covers_maze(maze_runs):
    run = maze_runs[MAZE_SEEDS[0]]
    observable = run["observable"]
    assert observable.any()
    observed = run["team"].omap.observed
    assert np.mean(observed[observable]) >= 0.95


def test_team_needs_fewer_steps_than_aerial_agent(maze_runs):
    for run in maze_runs.values():
        total = int(run["observable"].sum())
        team = steps_to_fraction(run["team"].summary()["observed"], total)
        alone = steps_to_fraction(run["uav"].summary()["observed"], total)
        assert team is not None
        # an aerial agent that never gets there counts as slower
        if alone is not None:
            assert team <= 0.8 * alone
