# data/datasets.py
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import torch

from config import DATASET_STATS, Config, data_dir
from errors import DatasetError
from logs import get_logger


# ============================================================
# 📦 HANDLE DE DATOS
# ============================================================

@dataclass(frozen=True, eq=False)
class DatasetHandle:
    """
    Ejemplos etiquetados ya normalizados (N×C×H×W, float32) y sus etiquetas.

    Se trata como solo-lectura: las vistas de cliente comparten la memoria
    del tensor original a través de `subset`.
    """

    name: str
    split: str
    features: torch.Tensor
    labels: torch.Tensor
    num_classes: int
    indices: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise DatasetError(f"Split inválido: {self.split}")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DatasetError("features y labels tienen distinto largo")
        if len(self.labels) and int(self.labels.max()) >= self.num_classes:
            raise DatasetError(f"Etiqueta fuera de rango en {self.name}/{self.split}")
        if len(self.labels) and int(self.labels.min()) < 0:
            raise DatasetError(f"Etiqueta negativa en {self.name}/{self.split}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_shape(self) -> tuple:
        return tuple(self.features.shape[1:])

    def subset(self, indices) -> "DatasetHandle":
        idx = np.asarray(indices, dtype=np.int64)
        if len(idx) and (idx.min() < 0 or idx.max() >= len(self)):
            raise DatasetError(f"Índice fuera de rango para {self.name} ({len(self)} ejemplos)")
        t = torch.from_numpy(idx)
        return DatasetHandle(
            name=self.name,
            split=self.split,
            features=self.features[t],
            labels=self.labels[t],
            num_classes=self.num_classes,
            indices=idx,
        )

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels.numpy(), minlength=self.num_classes)


# ============================================================
# 🗂️ REGISTRO DE DATASETS
# ============================================================

_LOADERS = {}


def register_dataset(name: str, loader) -> None:
    """
    Registra un cargador `loader(split, root, download) -> DatasetHandle`.
    Sirve para datasets en memoria (tests) o propios del usuario.
    """
    _LOADERS[name] = loader
    load_dataset.cache_clear()


def _normalizar(imgs: np.ndarray, nombre: str) -> torch.Tensor:
    stats = DATASET_STATS[nombre]
    x = torch.from_numpy(np.ascontiguousarray(imgs)).float().div_(255.0)
    mean = torch.tensor(stats["mean"]).view(1, -1, 1, 1)
    std = torch.tensor(stats["std"]).view(1, -1, 1, 1)
    return (x - mean) / std


def _torchvision_loader(nombre: str):
    def cargar(split: str, root, download: bool) -> DatasetHandle:
        from torchvision import datasets

        clase = getattr(datasets, nombre)
        if nombre == "SVHN":
            ds = clase(root=str(root), split=split, download=download)
            imgs, labels = ds.data, np.asarray(ds.labels)
        else:
            ds = clase(root=str(root), train=(split == "train"), download=download)
            imgs = ds.data.numpy() if torch.is_tensor(ds.data) else np.asarray(ds.data)
            labels = ds.targets.numpy() if torch.is_tensor(ds.targets) else np.asarray(ds.targets)

        if imgs.ndim == 3:
            imgs = imgs[:, None, :, :]
        elif imgs.shape[-1] in (1, 3):
            imgs = imgs.transpose(0, 3, 1, 2)

        return DatasetHandle(
            name=nombre,
            split=split,
            features=_normalizar(imgs, nombre),
            labels=torch.from_numpy(labels.astype(np.int64)),
            num_classes=DATASET_STATS[nombre]["num_classes"],
        )

    return cargar


for _nombre in DATASET_STATS:
    _LOADERS[_nombre] = _torchvision_loader(_nombre)


def _canonico(name: str) -> str:
    for conocido in _LOADERS:
        if conocido.lower() == name.lower():
            return conocido
    raise DatasetError(f"Dataset desconocido: {name}. Disponibles: {sorted(_LOADERS)}")


@lru_cache(maxsize=8)
def _cargar(nombre: str, split: str, root: str, download: bool) -> DatasetHandle:
    logger = get_logger()
    try:
        handle = _LOADERS[nombre](split, root, download)
    except DatasetError:
        raise
    except (RuntimeError, OSError, ValueError) as e:
        logger.exception(f"❌ No se pudo cargar {nombre}/{split} desde {root}")
        raise DatasetError(f"Archivos faltantes o corruptos para {nombre}/{split}: {e}") from e

    logger.info(f"✅ Dataset {nombre}/{split} cargado: {len(handle)} ejemplos")
    return handle


def load_dataset(name: str, split: str = "train", root=None, download=None) -> DatasetHandle:
    """Carga un dataset normalizado con orden determinista de ejemplos."""
    if split not in ("train", "test"):
        raise DatasetError(f"Split inválido: {split}")
    nombre = _canonico(name)
    root = str(root or data_dir())
    download = Config.DOWNLOAD if download is None else download
    return _cargar(nombre, split, root, bool(download))


load_dataset.cache_clear = _cargar.cache_clear
