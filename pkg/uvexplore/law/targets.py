from pathlib import PurePosixPath
from typing import Dict, Iterable, Union

import luigi
from luigi.contrib.s3 import S3Target
from luigi.format import BaseWrapper, WrappedFormat

from uvexplore.law.config import s3
from uvexplore.law.parameters import PATH_LIKE

# content types of the files tasks write, by suffix
CONTENT_TYPES = {
    ".voxw": "application/octet-stream",
    ".csv": "text/csv",
    ".json": "application/json",
}


class BytesFormat(WrappedFormat):
    input = "bytes"
    output = "bytes"
    wrapper_cls = BaseWrapper


Bytes = BytesFormat()


class LawS3Target(S3Target):
    optional = False

    def complete(self):
        return self.exists()


class LawLocalTarget(luigi.LocalTarget):
    optional = False

    def complete(self):
        return self.exists()


Target = Union[LawS3Target, LawLocalTarget]


def s3_or_local(path: PATH_LIKE) -> Target:
    """
    Target for one task output: a LawS3Target for `s3://` paths,
    a LawLocalTarget otherwise. Voxel-world files are opened as
    byte streams, CSV and JSON files as text.
    """
    path = str(path)
    suffix = PurePosixPath(path).suffix
    try:
        content_type = CONTENT_TYPES[suffix]
    except KeyError:
        raise ValueError(
            f"Can't write {path}, expected one of {list(CONTENT_TYPES)}"
        )

    format = Bytes if suffix == ".voxw" else None
    if path.startswith("s3://"):
        return LawS3Target(
            path,
            client=s3().client,
            ContentType=content_type,
            format=format,
        )
    return LawLocalTarget(path, format=format)


def output_targets(
    output_dir: PATH_LIKE, fnames: Iterable[str]
) -> Dict[str, Target]:
    """Targets for `fnames` under `output_dir`, keyed by file stem"""
    return {
        PurePosixPath(fname).stem: s3_or_local(output_dir / fname)
        for fname in fnames
    }
