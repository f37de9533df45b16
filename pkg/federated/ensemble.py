# federated/ensemble.py
"""
Vista del servidor sobre los modelos subidos por los clientes.

- average_logits   → maestro por promedio de logits (sin pesos por defecto)
- fedavg_aggregate → baseline FedAvg, promedio de parámetros ponderado por n_k
- evaluate         → accuracy top-1 sobre un split de test
"""
import copy
import json
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import torch

from data.datasets import DatasetHandle
from errors import CheckpointError, DatasetError, ShapeMismatchError, UnsupportedOperationError
from logs import get_logger
from models.base import arch_of, forward_logits, model_device
from models.checkpoint import load_checkpoint, save_checkpoint


# ============================================================
# 📦 BUNDLE DE MODELOS SUBIDOS
# ============================================================

@dataclass(frozen=True, eq=False)
class EnsembleBundle:
    clients: tuple
    sizes: tuple
    dataset: str | None = None
    num_classes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(self.clients))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))

        if not self.clients:
            raise ValueError("El bundle necesita al menos un cliente")
        if len(self.sizes) != len(self.clients):
            raise ValueError("sizes y clients tienen distinto largo")
        if any(n <= 0 for n in self.sizes):
            raise ValueError(f"Tamaños de cliente no positivos: {self.sizes}")

        clases = {getattr(c, "num_classes", self.num_classes) for c in self.clients}
        clases.discard(None)
        if len(clases) > 1:
            raise ValueError(f"Los clientes no comparten número de clases: {sorted(clases)}")
        if self.num_classes is None and clases:
            object.__setattr__(self, "num_classes", clases.pop())

    @property
    def m(self) -> int:
        return len(self.clients)

    @property
    def archs(self) -> list:
        return [arch_of(c) for c in self.clients]

    @property
    def is_homogeneous(self) -> bool:
        return len(set(self.archs)) == 1

    def weights(self) -> list:
        total = sum(self.sizes)
        return [n / total for n in self.sizes]

    @contextmanager
    def frozen(self):
        """Modo eval y sin requires_grad mientras dure el bloque; restaura al salir."""
        previos = [[p.requires_grad for p in c.parameters()] for c in self.clients]
        for c in self.clients:
            c.eval()
            c.requires_grad_(False)
        try:
            yield self
        finally:
            for c, flags in zip(self.clients, previos):
                for p, flag in zip(c.parameters(), flags):
                    p.requires_grad_(flag)

    # ------------------------------------------------------------
    # Persistencia: un checkpoint por cliente + bundle.json
    # ------------------------------------------------------------
    def save(self, directorio) -> Path:
        directorio = Path(directorio)
        directorio.mkdir(parents=True, exist_ok=True)
        archivos = []
        for k, c in enumerate(self.clients):
            ruta = save_checkpoint(c, directorio / f"client_{k}.pt", dataset=self.dataset)
            archivos.append(ruta.name)

        manifest = {
            "dataset": self.dataset,
            "num_classes": self.num_classes,
            "sizes": list(self.sizes),
            "archs": self.archs,
            "files": archivos,
        }
        (directorio / "bundle.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        return directorio

    @classmethod
    def load(cls, directorio) -> "EnsembleBundle":
        directorio = Path(directorio)
        try:
            manifest = json.loads((directorio / "bundle.json").read_text(encoding="utf-8"))
        except (FileNotFoundError, json.JSONDecodeError) as e:
            raise CheckpointError(f"Bundle inválido en {directorio}: {e}") from e
        clientes = [load_checkpoint(directorio / f)[0] for f in manifest["files"]]
        return cls(
            clients=clientes,
            sizes=manifest["sizes"],
            dataset=manifest.get("dataset"),
            num_classes=manifest.get("num_classes"),
        )


# ============================================================
# 🧮 LOGITS PROMEDIO
# ============================================================

def _check_input_shapes(bundle: EnsembleBundle, batch: torch.Tensor) -> None:
    formas = {tuple(c.input_shape) for c in bundle.clients if hasattr(c, "input_shape")}
    if len(formas) > 1:
        raise ShapeMismatchError(f"Los clientes tienen entradas heterogéneas: {sorted(formas)}")


def ensemble_forward(bundle: EnsembleBundle, batch: torch.Tensor, capture_stats: bool = False, weighted: bool = False):
    """
    Un único pase por cada cliente: devuelve (logits promedio, capturas BN por cliente).

    La suma recorre los clientes en orden fijo, así el resultado es determinista.
    """
    _check_input_shapes(bundle, batch)

    logits, capturas = [], []
    for c in bundle.clients:
        salida, captura = forward_logits(c, batch, capture_stats=capture_stats)
        logits.append(salida)
        capturas.append(captura)

    if weighted:
        promedio = sum(w * l for w, l in zip(bundle.weights(), logits))
    else:
        promedio = sum(logits) / bundle.m
    return promedio, capturas


def average_logits(bundle: EnsembleBundle, batch: torch.Tensor, weighted: bool = False) -> torch.Tensor:
    """(1/m) Σ_k f^k(batch); con `weighted=True` usa n_k/n en lugar de 1/m."""
    promedio, _ = ensemble_forward(bundle, batch, capture_stats=False, weighted=weighted)
    return promedio


# ============================================================
# 🔁 FEDAVG
# ============================================================

def fedavg_aggregate(bundle: EnsembleBundle):
    """θ_S = Σ_k (n_k/n) θ^k sobre todo el state_dict, incluidas las running stats de BN."""
    if not bundle.is_homogeneous:
        raise UnsupportedOperationError(
            f"FedAvg no soporta modelos heterogéneos (arquitecturas: {sorted(set(bundle.archs))})"
        )

    pesos = bundle.weights()
    estados = [c.state_dict() for c in bundle.clients]
    agregado = {}
    for clave, referencia in estados[0].items():
        if referencia.is_floating_point():
            agregado[clave] = sum(w * s[clave] for w, s in zip(pesos, estados))
        else:
            # contadores enteros (num_batches_tracked): se toma el del primer cliente
            agregado[clave] = referencia.clone()

    global_model = copy.deepcopy(bundle.clients[0])
    global_model.load_state_dict(agregado)
    get_logger().info(f"✅ FedAvg de {bundle.m} clientes con pesos {[round(w, 4) for w in pesos]}")
    return global_model


# ============================================================
# 📏 EVALUACIÓN
# ============================================================

@torch.no_grad()
def evaluate(model, test: DatasetHandle, batch_size: int = 1000) -> float:
    if len(test) == 0:
        raise DatasetError("El split de test está vacío")
    esperado = getattr(model, "input_shape", None)
    if esperado is not None and tuple(test.input_shape) != tuple(esperado):
        raise ShapeMismatchError(f"Test {test.input_shape} no coincide con la entrada {tuple(esperado)}")

    model.eval()
    device = model_device(model)
    aciertos = 0
    for inicio in range(0, len(test), batch_size):
        x = test.features[inicio:inicio + batch_size].to(device)
        y = test.labels[inicio:inicio + batch_size].to(device)
        aciertos += int((model(x).argmax(dim=1) == y).sum())
    return aciertos / len(test)
