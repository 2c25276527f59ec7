import json

import luigi

from uvexplore.explore import MODES
from uvexplore.law.base import ExploreTask
from uvexplore.law.config import exploration
from uvexplore.law.parameters import WorldParameter
from uvexplore.law.targets import output_targets
from uvexplore.law.tasks.world import GenerateWorld

OUTPUTS = ["metrics.csv", "paths.csv", "map.voxw", "summary.json"]


class Explore(ExploreTask):
    """
    Law task to explore a world with the team or a single agent
    """

    world = WorldParameter(
        description="World to explore: a generator reference such "
        "as `maze:3` or the path to a .voxw file",
        default="maze:0",
    )
    mode = luigi.ChoiceParameter(
        choices=list(MODES),
        description="Explore with the team, with the team but "
        "without frontier distribution, or with one agent alone",
        default="team",
    )
    seed = luigi.IntParameter(
        description="Master seed of the run", default=0
    )

    def requires(self):
        generator = WorldParameter.generator(self.world)
        if generator is None:
            return []
        kind, world_seed = generator
        return GenerateWorld.req(self, kind=kind, world_seed=world_seed)

    def output(self):
        return output_targets(self.output_dir, OUTPUTS)

    def load_world(self):
        from uvexplore.world import load_world, read_world

        if WorldParameter.generator(self.world) is None:
            return load_world(self.world)
        with self.input().open("r") as f:
            return read_world(f)

    def run(self):
        from uvexplore.explore import (
            run_exploration,
            write_metrics,
            write_paths,
        )
        from uvexplore.occupancy import dump_map

        config = exploration().to_config(self.world, self.mode, self.seed)
        result = run_exploration(config, self.load_world())

        outputs = self.output()
        with outputs["metrics"].open("w") as f:
            write_metrics(result.records, f)
        with outputs["paths"].open("w") as f:
            write_paths(result.records, f)
        with outputs["map"].open("w") as f:
            dump_map(result.omap, f)
        with outputs["summary"].open("w") as f:
            json.dump(result.summary(), f, indent=2)
        self.publish_message(
            f"{self.mode} exploration of {self.world} finished: "
            f"{result.status.value} after {len(result.records)} steps"
        )

