# models/checkpoint.py
import json
import os
from pathlib import Path

import torch

from errors import CheckpointError
from models.base import arch_of, bn_layer_shapes
from models.zoo import build_model


def _blob_path(path) -> Path:
    path = Path(path)
    return path if path.suffix else path.with_suffix(".pt")


def _manifest_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_checkpoint(model, path, dataset: str | None = None) -> Path:
    """Guarda el state_dict en `path` (por defecto `.pt`) y el manifest al lado en `.json`."""
    path = _blob_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    canales, alto, _ = getattr(model, "input_shape", (None, None, None))
    manifest = {
        "arch_id": arch_of(model),
        "num_classes": getattr(model, "num_classes", None),
        "seed": getattr(model, "seed", None),
        "dataset": dataset,
        "bn_layer_shapes": bn_layer_shapes(model),
        "in_channels": canales,
        "image_size": alto,
        "width": getattr(model, "width", 1.0),
    }

    tmp = path.parent / (path.name + ".tmp")
    torch.save(model.state_dict(), tmp)
    os.replace(tmp, path)
    _manifest_path(path).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def read_manifest(path) -> dict:
    ruta = _manifest_path(_blob_path(path))
    try:
        return json.loads(ruta.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise CheckpointError(f"Falta el manifest {ruta}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Manifest corrupto {ruta}: {e}") from e


def load_checkpoint(path, map_location="cpu"):
    path = _blob_path(path)
    manifest = read_manifest(path)
    model = build_model(
        manifest["arch_id"],
        manifest["num_classes"],
        manifest.get("seed") or 0,
        in_channels=manifest["in_channels"],
        image_size=manifest["image_size"],
        width=manifest.get("width", 1.0),
    )
    try:
        estado = torch.load(path, map_location=map_location, weights_only=True)
        model.load_state_dict(estado)
    except (OSError, RuntimeError) as e:
        raise CheckpointError(f"No se pudo leer el checkpoint {path}: {e}") from e
    if bn_layer_shapes(model) != manifest["bn_layer_shapes"]:
        raise CheckpointError(f"Capas BN del checkpoint {path} no coinciden con el manifest")
    return model, manifest
