import argparse
import logging
import sys
from typing import List, Optional

from uvexplore.explore import (
    ExplorationConfig,
    run_exploration,
    single_agent_baseline,
    write_outputs,
)
from uvexplore.goals import export_view_quality, render_map
from uvexplore.occupancy import load_map
from uvexplore.sensors import default_ugv
from uvexplore.viewpoint import Viewpoint
from uvexplore.world import GENERATORS, generate_world, save_world

logger = logging.getLogger(__name__)


def _config(args: argparse.Namespace, mode: str) -> ExplorationConfig:
    return ExplorationConfig(
        world=args.world or f"maze:{args.seed}",
        mode=mode,
        lam=args.lam,
        n_r=args.rays_per_voxel,
        epsilon=args.epsilon,
        max_steps=args.max_steps,
        seed=args.seed,
        threads=args.threads,
    )


def cmd_explore(args: argparse.Namespace) -> int:
    config = _config(args, args.mode)
    result = run_exploration(config)
    write_outputs(result, args.out)
    return result.status.exit_code


def cmd_baseline(args: argparse.Namespace) -> int:
    config = _config(args, "team")
    result = single_agent_baseline(config, args.agent)
    write_outputs(result, args.out)
    return result.status.exit_code


def cmd_gen_world(args: argparse.Namespace) -> int:
    world = generate_world(args.kind, args.seed)
    save_world(world, args.out)
    logger.info(
        f"Wrote {args.kind} world with seed {args.seed}, "
        f"shape {world.shape}, to {args.out}"
    )
    return 0


def cmd_render_vq(args: argparse.Namespace) -> int:
    omap = load_map(args.map)
    agent = default_ugv()
    start = None
    if args.start is not None:
        start = Viewpoint(args.start[0], args.start[1], agent.sensor_height)
    image = render_map(
        omap, agent, args.rays_per_voxel, args.seed, args.threads, start
    )
    if image is None:
        logger.error(f"No valid ground agent cell in {args.map}")
        return 2
    export_view_quality(image, args.out)
    logger.info(
        f"Rendered view quality of {len(image)} cells "
        f"(max IG {image.ig.max(initial=0)}) to {args.out}"
    )
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    defaults = ExplorationConfig()
    parser.add_argument(
        "--world",
        type=str,
        default=None,
        help="Voxel-world file or generator reference such as maze:3. "
        "Defaults to the maze generated from --seed",
    )
    parser.add_argument("--seed", type=int, default=defaults.seed)
    parser.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=defaults.lam,
        help="Distance penalty of the view quality, per meter",
    )
    parser.add_argument(
        "--rays-per-voxel", type=int, default=defaults.n_r
    )
    parser.add_argument(
        "--epsilon",
        type=float,
        default=defaults.epsilon,
        help="Stop once every planned path sees at most this many "
        "frontiers",
    )
    parser.add_argument("--max-steps", type=int, default=defaults.max_steps)
    parser.add_argument("--out", type=str, default="uvexplore-out")
    parser.add_argument("--threads", type=int, default=defaults.threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvexplore",
        description="Collaborative ground and aerial exploration of "
        "voxel worlds",
    )
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    explore = sub.add_parser("explore", help="Explore with the team")
    _add_common(explore)
    explore.add_argument(
        "--mode",
        choices=["team", "team-shared"],
        default="team",
        help="team-shared lets both agents choose goals from every "
        "frontier instead of distributing them",
    )
    explore.set_defaults(func=cmd_explore)

    baseline = sub.add_parser(
        "baseline", help="Explore with a single agent"
    )
    _add_common(baseline)
    baseline.add_argument("--agent", choices=["uav", "ugv"], required=True)
    baseline.set_defaults(func=cmd_baseline)

    gen = sub.add_parser("gen-world", help="Write a procedural world")
    gen.add_argument("--kind", choices=list(GENERATORS), default="maze")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=str, required=True)
    gen.set_defaults(func=cmd_gen_world)

    render = sub.add_parser(
        "render-vq", help="Dump the ground agent's view quality image"
    )
    render.add_argument("--map", type=str, required=True)
    render.add_argument("--out", type=str, required=True)
    render.add_argument(
        "--start",
        type=float,
        nargs=2,
        default=None,
        metavar=("X", "Y"),
        help="Ground agent position. Defaults to the valid cell "
        "nearest to the map corner",
    )
    render.add_argument("--seed", type=int, default=0)
    render.add_argument(
        "--rays-per-voxel", type=int, default=ExplorationConfig().n_r
    )
    render.add_argument("--threads", type=int, default=1)
    render.set_defaults(func=cmd_render_vq)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stdout,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
