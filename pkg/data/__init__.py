from .datasets import (
    Dataset,
    DatasetError,
    PartitionPlan,
    load_csv,
    make_blobs,
    partition_dirichlet,
    partition_iid,
    standardize,
    train_test_split,
    write_csv,
)

__all__ = [
    "Dataset",
    "DatasetError",
    "PartitionPlan",
    "load_csv",
    "make_blobs",
    "partition_dirichlet",
    "partition_iid",
    "standardize",
    "train_test_split",
    "write_csv",
]
