from .checkpoint import load_checkpoint, read_manifest, restore_optimizer, save_checkpoint
from .datasets import DataError, read_dataset, write_dataset
from .runconfig import RunConfig, parse_runconfig, resolved

__all__ = [
    "DataError", "RunConfig", "load_checkpoint", "parse_runconfig",
    "read_dataset", "read_manifest", "resolved", "restore_optimizer",
    "save_checkpoint", "write_dataset",
]
