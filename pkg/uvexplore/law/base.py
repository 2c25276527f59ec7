import law

from uvexplore.law.parameters import PathParameter


class ExploreTask(law.Task):
    """
    Base law task for uvexplore pipelines. Outputs are written
    under `output_dir`, a local directory or an s3 prefix.
    """

    output_dir = PathParameter(
        description="Directory where task outputs are written. "
        "Can be a local path or an s3 path."
    )

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if not str(self.output_dir).startswith("s3://"):
            self.output_dir.mkdir(exist_ok=True, parents=True)
