# data/partition.py
"""
Partición no-iid de un dataset entre m clientes simulados.

Para cada clase se muestrea un vector de proporciones p ~ Dir(alpha) de largo
m (una componente por cliente) y los índices de esa clase se reparten según
p, redondeando por mayor resto para conservar n exacto.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from data.datasets import DatasetHandle
from errors import PartitionError
from logs import get_logger

MAX_REINTENTOS = 10


@dataclass(frozen=True)
class PartitionPlan:
    alpha: float
    num_clients: int
    seed: int
    assignments: list
    dataset: str | None = None
    client_sizes: list = field(init=False)

    def __post_init__(self):
        if len(self.assignments) != self.num_clients:
            raise PartitionError("assignments no coincide con num_clients")
        object.__setattr__(self, "client_sizes", [len(a) for a in self.assignments])

    @property
    def total(self) -> int:
        return sum(self.client_sizes)

    # ------------------------------------------------------------
    # Serialización JSON
    # ------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "num_clients": self.num_clients,
            "seed": self.seed,
            "dataset": self.dataset,
            "assignments": [[int(i) for i in a] for a in self.assignments],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PartitionPlan":
        try:
            return cls(
                alpha=float(data["alpha"]),
                num_clients=int(data["num_clients"]),
                seed=int(data["seed"]),
                assignments=[list(map(int, a)) for a in data["assignments"]],
                dataset=data.get("dataset"),
            )
        except KeyError as e:
            raise PartitionError(f"Plan incompleto, falta {e}") from e

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PartitionPlan":
        try:
            datos = json.loads(Path(path).read_text(encoding="utf-8"))
        except (FileNotFoundError, json.JSONDecodeError) as e:
            raise PartitionError(f"No se pudo leer el plan {path}: {e}") from e
        return cls.from_dict(datos)


def largest_remainder(proporciones: np.ndarray, total: int) -> np.ndarray:
    """Enteros no negativos que suman `total`, lo más cerca posible de proporciones*total."""
    crudo = proporciones * total
    cuentas = np.floor(crudo).astype(np.int64)
    faltan = total - int(cuentas.sum())
    if faltan > 0:
        # empates -> menor índice (argsort estable)
        orden = np.argsort(-(crudo - cuentas), kind="stable")
        cuentas[orden[:faltan]] += 1
    return cuentas


def _proporciones(rng: np.random.Generator, alpha: float, m: int) -> np.ndarray:
    p = rng.dirichlet(np.full(m, alpha))
    s = p.sum()
    if not np.isfinite(s) or s <= 0:
        # alpha muy chico puede devolver todo en cero por underflow
        p = np.zeros(m)
        p[rng.integers(m)] = 1.0
        return p
    return p / s


def _intento(labels: np.ndarray, num_classes: int, alpha: float, m: int, rng) -> list:
    asignaciones = [[] for _ in range(m)]
    for clase in range(num_classes):
        idx = np.flatnonzero(labels == clase)
        if len(idx) == 0:
            continue
        idx = rng.permutation(idx)
        cuentas = largest_remainder(_proporciones(rng, alpha, m), len(idx))
        cortes = np.cumsum(cuentas)[:-1]
        for k, parte in enumerate(np.split(idx, cortes)):
            asignaciones[k].extend(parte.tolist())
    return [sorted(a) for a in asignaciones]


def dirichlet_partition(data: DatasetHandle, alpha: float, m: int, seed: int) -> PartitionPlan:
    if data.split != "train":
        raise PartitionError("Solo se particiona el split de entrenamiento")
    if not alpha > 0:
        raise PartitionError(f"alpha debe ser positivo (recibido {alpha})")
    if m < 1:
        raise PartitionError(f"Se requiere al menos un cliente (recibido {m})")

    logger = get_logger()
    labels = data.labels.numpy()

    for intento in range(MAX_REINTENTOS + 1):
        rng = np.random.default_rng([seed, intento])
        asignaciones = _intento(labels, data.num_classes, alpha, m, rng)
        vacios = [k for k, a in enumerate(asignaciones) if not a]
        if not vacios:
            return PartitionPlan(
                alpha=float(alpha),
                num_clients=m,
                seed=seed,
                assignments=asignaciones,
                dataset=data.name,
            )
        logger.warning(
            f"⚠️ Partición con clientes vacíos {vacios} (alpha={alpha}, seed={seed}); "
            f"reintento {intento + 1}/{MAX_REINTENTOS}"
        )

    raise PartitionError(
        f"No se logró una partición sin clientes vacíos tras {MAX_REINTENTOS} reintentos "
        f"(alpha={alpha}, m={m}, n={len(data)})"
    )


def partition_summary(plan: PartitionPlan, data: DatasetHandle) -> np.ndarray:
    """Matriz m × C con la cantidad de ejemplos de cada clase por cliente."""
    labels = data.labels.numpy()
    matriz = np.zeros((plan.num_clients, data.num_classes), dtype=np.int64)
    for k, idx in enumerate(plan.assignments):
        idx = np.asarray(idx, dtype=np.int64)
        if len(idx) and (idx.min() < 0 or idx.max() >= len(labels)):
            raise PartitionError(f"El plan no corresponde al dataset: índice fuera de rango en cliente {k}")
        matriz[k] = np.bincount(labels[idx], minlength=data.num_classes)
    return matriz


def max_class_share(plan: PartitionPlan, data: DatasetHandle) -> np.ndarray:
    """Proporción de la clase mayoritaria en cada cliente (mide el sesgo)."""
    matriz = partition_summary(plan, data)
    return matriz.max(axis=1) / np.maximum(matriz.sum(axis=1), 1)
