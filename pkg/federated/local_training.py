# federated/local_training.py
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import torch
import torch.nn.functional as F

from config import Config
from data.datasets import DatasetHandle
from data.partition import PartitionPlan
from errors import ConfigError, LocalTrainingError
from federated.ensemble import EnsembleBundle
from logs import get_logger
from models.base import model_device
from models.zoo import build_for_dataset


# ============================================================
# ⚙️ CONFIGURACIÓN DE ENTRENAMIENTO LOCAL
# ============================================================

@dataclass(frozen=True)
class LocalTrainConfig:
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.01
    momentum: float = 0.9
    loss_id: str = "cross_entropy"
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs no puede ser negativo")
        if self.batch_size < 1:
            raise ValueError("batch_size debe ser positivo")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate debe ser positivo")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum debe estar en [0, 1)")


# Registro de objetivos locales; LDAM u otros se registran con register_loss
LOSSES = {
    "cross_entropy": F.cross_entropy,
}


def register_loss(name: str, fn) -> None:
    """`fn(logits, labels) -> escalar`."""
    LOSSES[name] = fn


# ============================================================
# 🏋️ ENTRENAMIENTO DE UN CLIENTE
# ============================================================

def local_update(model, shard: DatasetHandle, cfg: LocalTrainConfig):
    """
    E épocas de SGD con momentum sobre el shard del cliente (LR constante).

    Devuelve (modelo, traza) con la pérdida media de cada época.
    """
    if len(shard) == 0:
        raise LocalTrainingError("El shard del cliente está vacío")
    num_classes = getattr(model, "num_classes", None)
    if num_classes is not None and int(shard.labels.max()) >= num_classes:
        raise LocalTrainingError(f"El modelo tiene {num_classes} clases pero el shard trae etiquetas mayores")
    if cfg.loss_id not in LOSSES:
        raise ConfigError(f"Pérdida local desconocida: {cfg.loss_id}. Registradas: {sorted(LOSSES)}")

    traza = []
    if cfg.epochs == 0:
        return model, traza

    loss_fn = LOSSES[cfg.loss_id]
    device = model_device(model)
    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)
    # RNG propio del cliente: el orden de los batches no depende del paralelismo
    rng = torch.Generator().manual_seed(cfg.seed)
    n = len(shard)

    model.train()
    for epoca in range(cfg.epochs):
        perm = torch.randperm(n, generator=rng)
        suma, vistos = 0.0, 0
        for inicio in range(0, n, cfg.batch_size):
            idx = perm[inicio:inicio + cfg.batch_size]
            x = shard.features[idx].to(device)
            y = shard.labels[idx].to(device)

            optimizer.zero_grad(set_to_none=True)
            loss = loss_fn(model(x), y)
            if not torch.isfinite(loss):
                raise LocalTrainingError(
                    f"Pérdida no finita ({loss.item()}) en la época {epoca + 1}, batch desde {inicio}"
                )
            loss.backward()
            optimizer.step()

            suma += loss.item() * len(idx)
            vistos += len(idx)

        traza.append(suma / vistos)

    if not all(math.isfinite(v) for v in traza):
        raise LocalTrainingError("La traza de pérdidas contiene valores no finitos")
    return model, traza


# ============================================================
# 👥 TODOS LOS CLIENTES
# ============================================================

def train_all_clients(
    plan: PartitionPlan,
    data: DatasetHandle,
    arch_assignment,
    cfg: LocalTrainConfig,
    width: float = 1.0,
    workers: int | None = None,
    device=None,
    init_models=None,
) -> EnsembleBundle:
    """
    Entrena los m clientes de forma independiente y arma el bundle.

    El cliente k usa seed+k para inicializar y barajar. Los modelos se
    construyen en serie (el RNG global no es seguro entre hilos) y luego se
    entrenan, en paralelo si `workers > 1`; el resultado no depende del orden.
    `init_models` permite arrancar de parámetros dados (multi-ronda).
    """
    logger = get_logger()
    arch_assignment = list(arch_assignment)
    if len(arch_assignment) != plan.num_clients:
        raise LocalTrainingError(
            f"Se esperaban {plan.num_clients} arquitecturas, llegaron {len(arch_assignment)}"
        )

    shards = [data.subset(idx) for idx in plan.assignments]
    vacios = [k for k, s in enumerate(shards) if len(s) == 0]
    if vacios:
        raise LocalTrainingError(f"Clientes con shard vacío: {vacios}")

    device = torch.device(device or Config.DEVICE)
    if init_models is not None:
        modelos = [m.to(device) for m in init_models]
    else:
        modelos = [
            build_for_dataset(arch, data, seed=cfg.seed + k, width=width).to(device)
            for k, arch in enumerate(arch_assignment)
        ]
    configs = [replace(cfg, seed=cfg.seed + k) for k in range(plan.num_clients)]

    def entrenar(k: int):
        inicio = time.perf_counter()
        modelo, traza = local_update(modelos[k], shards[k], configs[k])
        logger.info(
            f"✅ Cliente {k} ({arch_assignment[k]}, n={len(shards[k])}) entrenado en "
            f"{time.perf_counter() - inicio:.1f}s; pérdida final {traza[-1] if traza else float('nan'):.4f}"
        )
        return modelo

    workers = workers or Config.WORKERS
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entrenados = list(pool.map(entrenar, range(plan.num_clients)))
    else:
        entrenados = [entrenar(k) for k in range(plan.num_clients)]

    return EnsembleBundle(
        clients=entrenados,
        sizes=plan.client_sizes,
        dataset=data.name,
        num_classes=data.num_classes,
    )
