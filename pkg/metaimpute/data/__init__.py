from metaimpute.data.episodes import (
    DatasetSplit,
    Episode,
    RatingMatrix,
    make_meta_test_suite,
    partition_and_normalize,
    sample_episode,
)
from metaimpute.data.formats import load_triplets, write_triplets
from metaimpute.data.manifest import Manifest, read_manifest, write_manifest
from metaimpute.data.splits import load_split, save_split

__all__ = [
    "DatasetSplit",
    "Episode",
    "Manifest",
    "RatingMatrix",
    "load_split",
    "load_triplets",
    "make_meta_test_suite",
    "partition_and_normalize",
    "read_manifest",
    "sample_episode",
    "save_split",
    "write_manifest",
    "write_triplets",
]
