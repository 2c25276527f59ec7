import luigi
from luigi.util import inherits

from uvexplore.law.base import ExploreTask
from uvexplore.law.targets import s3_or_local
from uvexplore.law.tasks.explore import Explore


@inherits(Explore)
class RenderViewQuality(ExploreTask):
    """
    Law task to render the ground agent's view quality over the
    final map of an exploration run
    """

    n_r = luigi.IntParameter(
        description="Frontier samples per corridor cell", default=50
    )
    render_seed = luigi.IntParameter(
        description="Seed of the per-cell sampling streams", default=0
    )

    def requires(self):
        return Explore.req(self)

    def output(self):
        return s3_or_local(self.output_dir / "view_quality.csv")

    def run(self):
        from uvexplore.goals import render_map, write_view_quality
        from uvexplore.law.config import exploration
        from uvexplore.occupancy import read_map
        from uvexplore.sensors import default_ugv

        with self.input()["map"].open("r") as f:
            omap = read_map(f)
        image = render_map(
            omap,
            default_ugv(),
            self.n_r,
            self.render_seed,
            exploration().threads,
        )
        if image is None:
            raise ValueError(
                f"Map of {self.world} has no valid ground agent cell"
            )
        with self.output().open("w") as f:
            write_view_quality(image, f)
