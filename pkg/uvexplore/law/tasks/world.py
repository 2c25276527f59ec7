import luigi

from uvexplore.law.base import ExploreTask
from uvexplore.law.targets import s3_or_local
from uvexplore.world import GENERATORS


class GenerateWorld(ExploreTask):
    """
    Law task to generate a procedural ground truth world
    """

    kind = luigi.ChoiceParameter(
        choices=list(GENERATORS),
        description="Procedural generator to use",
        default="maze",
    )
    world_seed = luigi.IntParameter(
        description="Seed of the world generator", default=0
    )

    def output(self):
        fname = f"{self.kind}-{self.world_seed}.voxw"
        return s3_or_local(self.output_dir / fname)

    def run(self):
        from uvexplore.world import dump_world, generate_world

        world = generate_world(self.kind, self.world_seed)
        with self.output().open("w") as f:
            dump_world(world, f)
