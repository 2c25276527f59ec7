import os

import luigi
from luigi.contrib.s3 import S3Client

from uvexplore.explore import ExplorationConfig
from uvexplore.optimize import SoftVisibilityParams
from uvexplore.planner import RRTParams

_defaults = ExplorationConfig()


class s3(luigi.Config):
    """
    Global S3 client configuration.
    """

    endpoint_url = luigi.Parameter(
        description="S3 endpoint URL. Defaults to reading from "
        "`AWS_ENDPOINT_URL` environment variable.",
        default=os.getenv("AWS_ENDPOINT_URL"),
    )
    aws_access_key_id = luigi.Parameter(
        description="AWS access key ID. Defaults to reading from "
        "`AWS_ACCESS_KEY_ID` environment variable.",
        default=os.getenv("AWS_ACCESS_KEY_ID"),
    )
    aws_secret_access_key = luigi.Parameter(
        description="AWS secret access key. Defaults to reading from "
        "`AWS_SECRET_ACCESS_KEY` environment variable.",
        default=os.getenv("AWS_SECRET_ACCESS_KEY"),
    )

    @property
    def client(self):
        return S3Client(
            aws_access_key_id=self.aws_access_key_id,
            aws_secret_access_key=self.aws_secret_access_key,
            endpoint_url=self.endpoint_url,
        )


class exploration(luigi.Config):
    """
    Planner settings shared by every exploration task. Set them
    in the `[exploration]` section of the law config file.
    """

    lam = luigi.FloatParameter(
        description="Distance penalty of the view quality, per meter",
        default=_defaults.lam,
    )
    n_r = luigi.IntParameter(
        description="Frontier samples per corridor cell when "
        "rendering the ground agent's view quality",
        default=_defaults.n_r,
    )
    epsilon = luigi.FloatParameter(
        description="Exploration ends once every planned path "
        "sees at most this many frontiers",
        default=_defaults.epsilon,
    )
    cluster_factor = luigi.IntParameter(
        description="Edge, in voxels, of the blocks used to cluster "
        "the aerial agent's frontiers. Must be a power of two",
        default=_defaults.cluster_factor,
    )
    spacing = luigi.FloatParameter(
        description="Maximum distance in meters between consecutive "
        "viewpoints of an executed path",
        default=_defaults.spacing,
    )
    max_steps = luigi.IntParameter(
        description="Maximum number of planning steps",
        default=_defaults.max_steps,
    )
    threads = luigi.IntParameter(
        description="Worker threads for rendering, frontier "
        "distribution and scan simulation",
        default=_defaults.threads,
    )
    optimizer_iters = luigi.IntParameter(
        description="Iteration budget of the yaw optimizer",
        default=_defaults.optimizer_iters,
    )
    goal_bias = luigi.FloatParameter(
        description="Probability that RRT samples the goal",
        default=_defaults.rrt.goal_bias,
    )
    rrt_iterations = luigi.IntParameter(
        description="Iteration budget of a single RRT query",
        default=_defaults.rrt.max_iterations,
    )
    k_d = luigi.FloatParameter(
        description="Range sharpness of the soft visibility filter",
        default=_defaults.soft.k_d,
    )
    k_a = luigi.FloatParameter(
        description="Angular sharpness of the soft visibility filter",
        default=_defaults.soft.k_a,
    )

    def to_config(
        self, world: str, mode: str = "team", seed: int = 0
    ) -> ExplorationConfig:
        return ExplorationConfig(
            world=world,
            mode=mode,
            lam=self.lam,
            n_r=self.n_r,
            epsilon=self.epsilon,
            cluster_factor=self.cluster_factor,
            spacing=self.spacing,
            max_steps=self.max_steps,
            seed=seed,
            threads=self.threads,
            optimizer_iters=self.optimizer_iters,
            rrt=RRTParams(
                goal_bias=self.goal_bias, max_iterations=self.rrt_iterations
            ),
            soft=SoftVisibilityParams(k_d=self.k_d, k_a=self.k_a),
        )
