import csv
import json

import law
import luigi

from uvexplore.explore import MODES
from uvexplore.law.base import ExploreTask
from uvexplore.law.targets import s3_or_local
from uvexplore.law.tasks.explore import Explore
from uvexplore.law.tasks.world import GenerateWorld


class Benchmark(law.LocalWorkflow, ExploreTask):
    """
    Law workflow exploring one procedural world kind for several
    seeds with the team, the team without frontier distribution
    and each agent alone. Each branch reports how many planning
    steps its run needed to observe 90% of the voxels the team
    could observe.
    """

    kind = luigi.Parameter(
        description="Procedural world generator to benchmark on",
        default="maze",
    )
    seeds = luigi.ListParameter(
        description="Seeds of the generated worlds, also used as "
        "master seeds of the runs",
    )
    modes = luigi.ListParameter(
        description="Modes to run for each seed", default=list(MODES)
    )
    fraction = luigi.FloatParameter(
        description="Fraction of the observable voxels that counts "
        "as covered",
        default=0.9,
    )

    def create_branch_map(self):
        branches = [(s, m) for s in self.seeds for m in self.modes]
        return dict(enumerate(branches))

    def run_dir(self, seed, mode):
        return self.output_dir / f"{self.kind}-{seed}" / mode

    def requires(self):
        seed, mode = self.branch_data
        return {
            "run": Explore.req(
                self,
                world=f"{self.kind}:{seed}",
                mode=mode,
                seed=seed,
                output_dir=self.run_dir(seed, mode),
            ),
            "world": GenerateWorld.req(
                self,
                kind=self.kind,
                world_seed=seed,
                output_dir=self.run_dir(seed, mode),
            ),
        }

    def output(self):
        seed, mode = self.branch_data
        fname = f"{self.kind}-{seed}-{mode}.json"
        return s3_or_local(self.output_dir / fname)

    def run(self):
        from uvexplore.explore import (
            ExplorationConfig,
            observable_voxels,
            steps_to_fraction,
        )
        from uvexplore.law.config import exploration
        from uvexplore.world import read_world

        seed, mode = self.branch_data
        with self.input()["world"].open("r") as f:
            world = read_world(f)
        with self.input()["run"]["summary"].open("r") as f:
            summary = json.load(f)

        # the denominator always comes from the full team
        team = ExplorationConfig().agents
        observable = int(
            observable_voxels(world, team, exploration().threads).sum()
        )
        observed = summary["observed"]
        steps = steps_to_fraction(observed, observable, self.fraction)
        result = {
            "seed": seed,
            "mode": mode,
            "status": summary["status"],
            "steps": summary["steps"],
            "observable": observable,
            "final_observed": observed[-1] if observed else 0,
            "steps_to_fraction": steps,
            "agents": summary["agents"],
        }
        with self.output().open("w") as f:
            json.dump(result, f, indent=2)


class BenchmarkSummary(ExploreTask):
    """
    Law task collecting every branch of a `Benchmark` into one
    CSV table
    """

    kind = luigi.Parameter(default="maze")
    seeds = luigi.ListParameter()
    modes = luigi.ListParameter(default=list(MODES))
    fraction = luigi.FloatParameter(default=0.9)

    def requires(self):
        return Benchmark.req(self)

    def output(self):
        return s3_or_local(self.output_dir / f"{self.kind}-benchmark.csv")

    def run(self):
        benchmark = self.requires()
        rows = []
        for _, branch in sorted(benchmark.get_branch_tasks().items()):
            with branch.output().open("r") as f:
                rows.append(json.load(f))

        fields = [
            "seed",
            "mode",
            "status",
            "steps",
            "observable",
            "final_observed",
            "steps_to_fraction",
        ]
        with self.output().open("w") as f:
            writer = csv.DictWriter(
                f, fieldnames=fields, extrasaction="ignore"
            )
            writer.writeheader()
            writer.writerows(rows)
