# fedsyn/distillation.py
"""
Etapa 2 y orquestador completo: destilación ensemble → modelo global,
una época de FedSyn, la corrida de T épocas y la extensión multi-ronda.
"""
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import torch
import torch.nn.functional as F

from config import Config, DATASET_STATS, apply_determinism
from data.datasets import DatasetHandle
from data.partition import PartitionPlan
from errors import NonFiniteError, UnsupportedOperationError
from federated.ensemble import EnsembleBundle, average_logits, evaluate
from federated.local_training import LocalTrainConfig, train_all_clients
from fedsyn.generator_stage import (
    BN_NORMS,
    EPS,
    GenLossWeights,
    generator_inner_loop,
    sample_noise_and_labels,
)
from logs import get_logger
from models.base import model_device
from models.checkpoint import save_checkpoint
from models.generator import frozen_bn_stats, generate
from models.zoo import DEFAULT_NOISE_DIM, build_generator, build_model


# ============================================================
# ⚙️ CONFIGURACIÓN
# ============================================================

@dataclass(frozen=True)
class FedSynConfig:
    epochs: int = 200
    t_g: int = 30
    t_s: int = 1
    batch_size: int = 128
    lr_s: float = 0.01
    lr_g: float = 0.001
    momentum_s: float = 0.9
    lambda1: float = 1.0
    lambda2: float = 0.5
    noise_dim: int = DEFAULT_NOISE_DIM
    kl_temperature: float = 1.0
    bn_norm: str = "l2"
    rounds: int = 1
    seed: int = 0
    eval_every: int = 5
    fresh_z: bool = False
    weighted_logits: bool = False
    dump_every: int = 0
    width: float = 1.0

    def validate(self) -> None:
        for nombre in ("epochs", "t_g", "dump_every"):
            if getattr(self, nombre) < 0:
                raise ValueError(f"{nombre} no puede ser negativo")
        for nombre in ("t_s", "batch_size", "noise_dim", "rounds", "eval_every"):
            if getattr(self, nombre) < 1:
                raise ValueError(f"{nombre} debe ser ≥ 1")
        if self.lr_s < 0 or not self.lr_g > 0:
            raise ValueError("Tasas de aprendizaje inválidas")
        if not 0 <= self.momentum_s < 1:
            raise ValueError("momentum_s debe estar en [0, 1)")
        if not self.kl_temperature > 0:
            raise ValueError("kl_temperature debe ser positiva")
        if self.bn_norm not in BN_NORMS:
            raise ValueError(f"bn_norm debe ser una de {BN_NORMS}")
        if not self.width > 0:
            raise ValueError("width debe ser positivo")
        GenLossWeights(self.lambda1, self.lambda2)

    @property
    def weights(self) -> GenLossWeights:
        return GenLossWeights(self.lambda1, self.lambda2)


@dataclass
class EpochRecord:
    epoch: int
    l_gen: float | None
    l_ce: float | None
    l_bn: float | None
    l_div: float | None
    l_dis: float
    acc: float | None = None
    wall_ms: float = 0.0
    round: int = 1


@dataclass
class RunResult:
    model: object
    trace: list = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)
    generator: object = None
    final_accuracy: float | None = None
    client_accuracies: list = field(default_factory=list)

    def accuracy_curve(self) -> list:
        return [(r.round, r.epoch, r.acc) for r in self.trace if r.acc is not None]


@dataclass
class FedSynState:
    generator: object
    student: object
    bundle: EnsembleBundle
    rng: torch.Generator
    gen_optimizer: object = None
    student_optimizer: object = None


# ============================================================
# 📉 PÉRDIDA DE DESTILACIÓN
# ============================================================

def distill_loss(avg_logits: torch.Tensor, student_logits: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """
    Media por batch de KL(softmax(D(x̂)) ‖ softmax(f_S(x̂))).

    Los logits del maestro se desacoplan: el gradiente solo llega a θ_S.
    """
    if avg_logits.shape != student_logits.shape:
        raise ValueError("Logits del ensemble y del estudiante con formas distintas")
    if not (torch.isfinite(avg_logits).all() and torch.isfinite(student_logits).all()):
        raise NonFiniteError("Logits no finitos en la destilación")

    p = F.softmax(avg_logits.detach() / temperature, dim=1)
    log_q = torch.log(F.softmax(student_logits / temperature, dim=1) + EPS)
    return (p * (torch.log(p + EPS) - log_q)).sum(dim=1).mean()


# ============================================================
# 🔁 UNA ÉPOCA DE FEDSYN
# ============================================================

def new_state(bundle: EnsembleBundle, student, generator, cfg: FedSynConfig) -> FedSynState:
    return FedSynState(
        generator=generator,
        student=student,
        bundle=bundle,
        rng=torch.Generator().manual_seed(cfg.seed),
        gen_optimizer=torch.optim.Adam(generator.parameters(), lr=cfg.lr_g),
        student_optimizer=torch.optim.SGD(student.parameters(), lr=cfg.lr_s, momentum=cfg.momentum_s),
    )


def fedsyn_epoch(state: FedSynState, cfg: FedSynConfig):
    """
    Muestrea (z, y), entrena el generador T_G pasos, regenera x̂ con el MISMO z
    (salvo `fresh_z`) y da T_S pasos de SGD sobre θ_S contra la destilación.
    """
    gen, student, bundle = state.generator, state.student, state.bundle
    device = model_device(student)
    num_classes = bundle.num_classes

    z, y = sample_noise_and_labels(cfg.batch_size, cfg.noise_dim, num_classes, state.rng)
    z, y = z.to(device), y.to(device)

    _, pasos = generator_inner_loop(
        gen, bundle, student, z, y,
        t_g=cfg.t_g,
        lr_g=cfg.lr_g,
        w=cfg.weights,
        optimizer=state.gen_optimizer,
        temperature=cfg.kl_temperature,
        bn_norm=cfg.bn_norm,
        weighted_logits=cfg.weighted_logits,
    )

    if cfg.fresh_z:
        z, _ = sample_noise_and_labels(cfg.batch_size, cfg.noise_dim, num_classes, state.rng)
        z = z.to(device)

    # x̂ con estadísticas del batch, como en la etapa 1, sin mover las running stats de G
    gen.train()
    with torch.no_grad(), frozen_bn_stats(gen):
        x = generate(gen, z)
    with torch.no_grad():
        maestro = average_logits(bundle, x, weighted=cfg.weighted_logits)

    # BN del alumno en modo inferencia, igual que los clientes: sus running stats no cambian
    student.eval()
    perdidas = []
    for _ in range(cfg.t_s):
        state.student_optimizer.zero_grad(set_to_none=True)
        loss = distill_loss(maestro, student(x), temperature=cfg.kl_temperature)
        loss.backward()
        state.student_optimizer.step()
        perdidas.append(loss.item())

    ultimo = pasos[-1] if pasos else None
    metricas = {
        "l_gen": ultimo.loss.item() if ultimo else None,
        "l_ce": ultimo.l_ce if ultimo else None,
        "l_bn": ultimo.l_bn if ultimo else None,
        "l_div": ultimo.l_div if ultimo else None,
        "l_dis": sum(perdidas) / len(perdidas),
        "x": x,
    }
    return state, metricas


# ============================================================
# 🚀 CORRIDA COMPLETA
# ============================================================

def _dump_samples(x: torch.Tensor, gen, ruta: Path) -> None:
    from torchvision.utils import save_image

    ruta.parent.mkdir(parents=True, exist_ok=True)
    pix = x * gen.std + gen.mean if hasattr(gen, "std") else x
    save_image(pix[:64].clamp(0, 1), str(ruta), nrow=8)


def _write_atomic(ruta: Path, texto: str) -> None:
    tmp = ruta.parent / (ruta.name + ".tmp")
    tmp.write_text(texto, encoding="utf-8")
    os.replace(tmp, ruta)


def run_fedsyn(
    bundle: EnsembleBundle,
    student_arch: str,
    cfg: FedSynConfig,
    test: DatasetHandle | None = None,
    out_dir=None,
    student=None,
    round_index: int = 1,
    device=None,
) -> RunResult:
    """
    T épocas de FedSyn sobre un bundle congelado (homogéneo o heterogéneo).

    Nunca agrega parámetros de los clientes: el modelo global se construye
    con `student_arch`, independiente de las arquitecturas del bundle.
    """
    logger = get_logger()
    apply_determinism(Config.DETERMINISTIC)
    device = torch.device(device or Config.DEVICE)

    canales, alto, ancho = bundle.clients[0].input_shape
    stats = DATASET_STATS.get(bundle.dataset, {"mean": (0.0,) * canales, "std": (1.0,) * canales})

    if student is None:
        student = build_model(
            student_arch, bundle.num_classes, cfg.seed,
            in_channels=canales, image_size=alto, width=cfg.width,
        )
    student = student.to(device)
    generator = build_generator(
        cfg.noise_dim, (canales, alto, ancho), stats["mean"], stats["std"],
        seed=cfg.seed + 10_000 * round_index, width=cfg.width,
    ).to(device)
    for c in bundle.clients:
        c.to(device)

    resultado = RunResult(model=student, generator=generator)
    tiempos = {"generator_and_distill": 0.0, "eval": 0.0}

    metrics_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_file = open(out_dir / "metrics.jsonl", "a" if round_index > 1 else "w", encoding="utf-8")

    try:
        with bundle.frozen():
            estado = new_state(bundle, student, generator, replace(cfg, seed=cfg.seed + 7919 * (round_index - 1)))
            for epoca in range(1, cfg.epochs + 1):
                inicio = time.perf_counter()
                estado, m = fedsyn_epoch(estado, cfg)
                tiempos["generator_and_distill"] += time.perf_counter() - inicio

                acc = None
                if test is not None and (epoca % cfg.eval_every == 0 or epoca == cfg.epochs):
                    t0 = time.perf_counter()
                    acc = evaluate(student, test)
                    tiempos["eval"] += time.perf_counter() - t0

                registro = EpochRecord(
                    epoch=epoca,
                    l_gen=m["l_gen"],
                    l_ce=m["l_ce"],
                    l_bn=m["l_bn"],
                    l_div=m["l_div"],
                    l_dis=m["l_dis"],
                    acc=acc,
                    wall_ms=(time.perf_counter() - inicio) * 1000.0,
                    round=round_index,
                )
                resultado.trace.append(registro)

                if metrics_file:
                    metrics_file.write(json.dumps(asdict(registro)) + "\n")
                    metrics_file.flush()
                if out_dir is not None and cfg.dump_every and epoca % cfg.dump_every == 0:
                    _dump_samples(m["x"], generator, out_dir / "samples" / f"round{round_index}_epoch{epoca}.png")

                if acc is not None:
                    logger.info(
                        f"📈 Ronda {round_index} época {epoca}/{cfg.epochs}: "
                        f"ℓ_dis={m['l_dis']:.4f} acc={acc:.4f}"
                    )
    finally:
        if metrics_file:
            metrics_file.close()

    resultado.stage_seconds = tiempos
    if test is not None:
        resultado.final_accuracy = evaluate(student, test) if not resultado.trace else resultado.trace[-1].acc
        resultado.client_accuracies = [evaluate(c, test) for c in bundle.clients]

    if out_dir is not None:
        save_result(resultado, out_dir, dataset=bundle.dataset)
    return resultado


def save_result(resultado: RunResult, out_dir, dataset: str | None = None) -> None:
    out_dir = Path(out_dir)
    save_checkpoint(resultado.model, out_dir / "student.pt", dataset=dataset)
    resumen = {
        "final_accuracy": resultado.final_accuracy,
        "client_accuracies": resultado.client_accuracies,
        "stage_seconds": resultado.stage_seconds,
        "epochs": len(resultado.trace),
        "curve": resultado.accuracy_curve(),
    }
    # temp + rename: el resumen aparece completo o no aparece
    _write_atomic(out_dir / "result.json", json.dumps(resumen, indent=2))


# ============================================================
# 🔂 EXTENSIÓN MULTI-RONDA
# ============================================================

def run_multiround(
    data: DatasetHandle,
    plan: PartitionPlan,
    archs,
    cfg: FedSynConfig,
    local_cfg: LocalTrainConfig,
    test: DatasetHandle | None = None,
    student_arch: str | None = None,
    out_dir=None,
    workers: int | None = None,
    device=None,
) -> RunResult:
    """
    T_c rondas: los clientes arrancan de θ_S (ronda 1: inicialización nueva),
    entrenan E épocas, suben su modelo y el servidor corre FedSyn.
    """
    logger = get_logger()
    archs = list(archs)
    student_arch = student_arch or archs[0]
    if cfg.rounds > 1 and (len(set(archs)) > 1 or student_arch != archs[0]):
        raise UnsupportedOperationError(
            "La extensión multi-ronda requiere arquitecturas homogéneas (los clientes cargan θ_S)"
        )

    student = None
    trace, tiempos = [], {}
    resultado = None
    for ronda in range(1, cfg.rounds + 1):
        init_models = None
        if student is not None:
            estado_global = student.state_dict()
            init_models = []
            for k, arch in enumerate(archs):
                modelo = build_model(
                    arch, data.num_classes, local_cfg.seed + k,
                    in_channels=data.input_shape[0], image_size=data.input_shape[1], width=cfg.width,
                )
                modelo.load_state_dict(estado_global)
                init_models.append(modelo)

        ronda_cfg = replace(local_cfg, seed=local_cfg.seed + 1000 * (ronda - 1))
        t0 = time.perf_counter()
        bundle = train_all_clients(
            plan, data, archs, ronda_cfg,
            width=cfg.width, workers=workers, device=device, init_models=init_models,
        )
        tiempos[f"round{ronda}_local"] = time.perf_counter() - t0

        resultado = run_fedsyn(
            bundle, student_arch, cfg,
            test=test, out_dir=out_dir, student=student, round_index=ronda, device=device,
        )
        student = resultado.model
        trace.extend(resultado.trace)
        for clave, valor in resultado.stage_seconds.items():
            tiempos[f"round{ronda}_{clave}"] = valor
        logger.info(f"✅ Ronda {ronda}/{cfg.rounds} terminada; acc={resultado.final_accuracy}")

    resultado.trace = trace
    resultado.stage_seconds = tiempos
    if out_dir is not None and cfg.rounds > 1:
        save_result(resultado, out_dir, dataset=data.name)
    return resultado
