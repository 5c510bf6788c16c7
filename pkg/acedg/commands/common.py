"""Options and loading helpers shared by the subcommands."""

import argparse
import json
from pathlib import Path
from typing import Any

from acedg.models.dataset import DomainDataset, DomainSplit
from acedg.schemas.attribution import EstimatorMode
from acedg.schemas.train import DatasetKind, TrainConfig
from acedg.services.data_service import NormalizationTransform
from acedg.services.training_service import prepare_split

# flag dest -> TrainConfig field
OVERRIDE_FIELDS = {
    "rho": "rho",
    "delta": "delta",
    "lr": "learning_rate",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "estimator": "estimator_mode",
    "mc_samples": "mc_samples",
    "latent_dim": "latent_dim",
    "normalize": "normalize",
    "repeats": "repeats",
    "dataset": "dataset",
    "data_file": "data_file",
    "target_domain": "target_domain",
}


def add_config_options(parser: argparse.ArgumentParser) -> None:
    """Config file plus the flags that override its values."""
    group = parser.add_argument_group("configuration")
    group.add_argument("--config", type=Path, help="Flat key=value config file")
    group.add_argument("--rho", type=float, help="Contrastive weight")
    group.add_argument("--delta", type=float, help="Hinge margin")
    group.add_argument("--lr", type=float, help="Learning rate")
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch-size", type=int)
    group.add_argument("--estimator", choices=[m.value for m in EstimatorMode])
    group.add_argument("--mc-samples", type=int)
    group.add_argument("--latent-dim", type=int)
    group.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None)
    group.add_argument("--repeats", type=int)
    group.add_argument("--seed", type=int, help="Sets init, data and pair seeds at once")
    group.add_argument("--dataset", choices=[k.value for k in DatasetKind])
    group.add_argument("--data-file", type=Path, help=".npz written by gen-data")
    group.add_argument("--target-domain", type=int)


def overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    overrides = {
        field: getattr(args, dest)
        for dest, field in OVERRIDE_FIELDS.items()
        if getattr(args, dest, None) is not None
    }
    if getattr(args, "seed", None) is not None:
        overrides.update(init_seed=args.seed, data_seed=args.seed, pair_seed=args.seed)
    # a data file implies the file dataset unless one was named
    if "data_file" in overrides and "dataset" not in overrides:
        overrides["dataset"] = DatasetKind.FILE
    return overrides


def load_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig.from_file(args.config, overrides_from_args(args))


def normalization_path(checkpoint: Path) -> Path:
    """Sidecar holding the normalization a checkpoint was trained with."""
    return checkpoint.with_name(checkpoint.stem + ".norm.json")


def save_normalization(transform: NormalizationTransform, checkpoint: Path) -> Path:
    path = normalization_path(checkpoint)
    path.write_text(json.dumps(transform.to_dict()) + "\n", encoding="utf-8")
    return path


def split_for_checkpoint(config: TrainConfig, dataset: DomainDataset, checkpoint: Path) -> DomainSplit:
    """
    Rebuild the split a checkpoint was trained on.

    Normalization statistics come from the checkpoint's sidecar when present,
    so evaluation uses the exact transform seen in training.
    """
    sidecar = normalization_path(checkpoint)
    if not sidecar.exists():
        return prepare_split(config, dataset).split

    raw = prepare_split(config.model_copy(update={"normalize": False}), dataset).split
    transform = NormalizationTransform.from_dict(json.loads(sidecar.read_text(encoding="utf-8")))
    return DomainSplit(
        target_domain=raw.target_domain,
        train=transform.apply(raw.train),
        validation=transform.apply(raw.validation),
        test=transform.apply(raw.test),
        holdout=transform.apply(raw.holdout) if raw.holdout is not None else None,
    )


def print_json(data: dict[str, Any]) -> None:
    print(json.dumps(data, sort_keys=True))
