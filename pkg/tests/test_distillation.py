import json
import math
from dataclasses import asdict, replace

import pytest
import torch
from torch import nn

from config import configs_from_dict
from conftest import TinyBN, TinyGen
from data.partition import dirichlet_partition
from errors import ConfigError, NonFiniteError, UnsupportedOperationError
from federated.ensemble import EnsembleBundle, evaluate
from federated.local_training import LocalTrainConfig, train_all_clients
from fedsyn.distillation import (
    FedSynConfig,
    distill_loss,
    fedsyn_epoch,
    new_state,
    run_fedsyn,
    run_multiround,
)
from models.checkpoint import load_checkpoint
from models.zoo import build_model

TOY_CFG = FedSynConfig(
    epochs=3, t_g=2, t_s=2, batch_size=16, noise_dim=8, eval_every=1, width=0.25, seed=0,
)
TOY_LOCAL = LocalTrainConfig(epochs=2, batch_size=32, seed=0)


class TinyLinear(nn.Module):
    """Clasificador lineal sobre la imagen aplanada, sin BN."""

    arch_id = "tinylinear"

    def __init__(self, num_classes=3, size=4):
        super().__init__()
        self.num_classes = num_classes
        self.input_shape = (1, size, size)
        self.lin = nn.Linear(size * size, num_classes)

    def forward(self, x):
        return self.lin(x.flatten(1))


@pytest.fixture
def toy_bundle(toy_train):
    plan = dirichlet_partition(toy_train, alpha=1.0, m=2, seed=0)
    return train_all_clients(plan, toy_train, ["cnn1", "cnn1"], TOY_LOCAL, width=0.25)


def _sin_tiempo(trace):
    return [{k: v for k, v in asdict(r).items() if k != "wall_ms"} for r in trace]


# ------------------------------------------------------------
# ℓ_dis
# ------------------------------------------------------------

def test_kl_logits_iguales_da_cero():
    logits = torch.randn(4, 5)
    assert distill_loss(logits, logits.clone()).item() == 0.0


def test_kl_ejemplo():
    maestro = torch.tensor([[math.log(3.0), 0.0]])   # softmax (0.75, 0.25)
    alumno = torch.zeros(1, 2)                        # softmax (0.5, 0.5)
    esperado = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
    assert distill_loss(maestro, alumno).item() == pytest.approx(esperado, rel=1e-5)
    assert distill_loss(maestro, alumno).item() == pytest.approx(0.130812, abs=1e-6)


def test_kl_igual_a_formula_directa():
    torch.manual_seed(3)
    maestro, alumno = torch.randn(8, 10, dtype=torch.float64), torch.randn(8, 10, dtype=torch.float64)
    p, q = torch.softmax(maestro, 1), torch.softmax(alumno, 1)
    oraculo = (p * (p.log() - q.log())).sum(1).mean().item()
    assert distill_loss(maestro, alumno).item() == pytest.approx(oraculo, rel=1e-6)


def test_kl_el_maestro_no_recibe_gradiente():
    maestro = torch.randn(3, 4, requires_grad=True)
    alumno = torch.randn(3, 4, requires_grad=True)
    distill_loss(maestro, alumno).backward()
    assert maestro.grad is None
    assert alumno.grad is not None


def test_kl_no_finita():
    with pytest.raises(NonFiniteError):
        distill_loss(torch.tensor([[float("inf"), 0.0]]), torch.zeros(1, 2))


def test_kl_gradiente_contra_diferencias_finitas():
    torch.manual_seed(4)
    alumno = nn.Linear(2, 2).double()   # 6 parámetros
    x = torch.randn(5, 2, dtype=torch.float64)
    maestro = torch.randn(5, 2, dtype=torch.float64)

    distill_loss(maestro, alumno(x)).backward()
    analitico = torch.cat([p.grad.flatten() for p in alumno.parameters()])

    numerico, h = [], 1e-6
    for p in alumno.parameters():
        plano = p.data.view(-1)
        for i in range(plano.numel()):
            original = plano[i].item()
            plano[i] = original + h
            mas = distill_loss(maestro, alumno(x)).item()
            plano[i] = original - h
            menos = distill_loss(maestro, alumno(x)).item()
            plano[i] = original
            numerico.append((mas - menos) / (2 * h))
    numerico = torch.tensor(numerico, dtype=torch.float64)
    assert ((analitico - numerico).norm() / numerico.norm()) < 1e-3


# ------------------------------------------------------------
# Una época
# ------------------------------------------------------------

def _estado_toy(cfg, student=None, clientes=None, size=4):
    torch.manual_seed(0)
    clientes = clientes or [TinyBN(), TinyBN()]
    bundle = EnsembleBundle(clients=clientes, sizes=[2] * len(clientes))
    gen = TinyGen(noise_dim=cfg.noise_dim, size=size)
    return new_state(bundle, student or TinyLinear(), gen, cfg)


def _cnn1_con_stats(seed):
    """cnn1 8×8 con running stats lejos de (0, 1) en todas sus capas BN."""
    modelo = build_model("cnn1", 3, seed=seed, in_channels=1, image_size=8, width=0.25)
    g = torch.Generator().manual_seed(seed + 100)
    with torch.no_grad():
        for capa in modelo.bn_layers():
            capa.running_mean.copy_(0.5 * torch.randn(capa.num_features, generator=g))
            capa.running_var.copy_(0.5 + torch.rand(capa.num_features, generator=g))
    return modelo


def _mismo_estado(a: dict, b: dict, atol=0.0) -> bool:
    if a.keys() != b.keys():
        return False
    for k in a:
        if a[k].is_floating_point():
            if not torch.allclose(a[k], b[k], atol=atol, rtol=0.0):
                return False
        elif not torch.equal(a[k], b[k]):
            return False
    return True


def _copia(modelo) -> dict:
    return {k: v.clone() for k, v in modelo.state_dict().items()}


def test_epoca_sin_pasos_no_cambia_nada_salvo_el_rng():
    cfg = FedSynConfig(t_g=0, t_s=1, lr_s=0.0, batch_size=4, noise_dim=3)
    estado = _estado_toy(cfg, student=_cnn1_con_stats(3), clientes=[_cnn1_con_stats(1), _cnn1_con_stats(2)], size=8)
    alumno_antes = _copia(estado.student)
    gen_antes = _copia(estado.generator)
    rng_antes = estado.rng.get_state()

    estado, metricas = fedsyn_epoch(estado, cfg)

    # state_dict completo: parámetros, running stats y num_batches_tracked
    assert _mismo_estado(alumno_antes, estado.student.state_dict())
    assert _mismo_estado(gen_antes, estado.generator.state_dict())
    assert not torch.equal(rng_antes, estado.rng.get_state())
    assert metricas["l_gen"] is None
    assert metricas["l_dis"] >= 0


def test_alumno_identico_al_cliente_es_punto_fijo():
    cfg = FedSynConfig(t_g=0, t_s=1, lr_s=0.1, momentum_s=0.0, batch_size=8, noise_dim=3)
    cliente = _cnn1_con_stats(1)
    alumno = build_model("cnn1", 3, seed=9, in_channels=1, image_size=8, width=0.25)
    alumno.load_state_dict(cliente.state_dict())
    estado = _estado_toy(cfg, student=alumno, clientes=[cliente], size=8)
    antes = _copia(alumno)

    _, metricas = fedsyn_epoch(estado, cfg)

    assert metricas["l_dis"] == pytest.approx(0.0, abs=1e-6)
    assert _mismo_estado(antes, alumno.state_dict(), atol=1e-6)


def test_punto_fijo_tambien_sin_bn():
    cfg = FedSynConfig(t_g=0, t_s=1, lr_s=0.1, momentum_s=0.0, batch_size=8, noise_dim=3)
    cliente = TinyLinear()
    alumno = TinyLinear()
    alumno.load_state_dict(cliente.state_dict())
    estado = _estado_toy(cfg, student=alumno, clientes=[cliente])
    antes = [p.clone() for p in alumno.parameters()]

    _, metricas = fedsyn_epoch(estado, cfg)

    assert metricas["l_dis"] == pytest.approx(0.0, abs=1e-7)
    assert all(torch.allclose(a, b, atol=1e-6) for a, b in zip(antes, alumno.parameters()))


def test_epoca_actualiza_generador_y_alumno():
    cfg = FedSynConfig(t_g=2, t_s=1, batch_size=8, noise_dim=3)
    estado = _estado_toy(cfg)
    gen_antes = [p.clone() for p in estado.generator.parameters()]
    alumno_antes = [p.clone() for p in estado.student.parameters()]
    _, metricas = fedsyn_epoch(estado, cfg)
    assert not all(torch.equal(a, b) for a, b in zip(gen_antes, estado.generator.parameters()))
    assert not all(torch.equal(a, b) for a, b in zip(alumno_antes, estado.student.parameters()))
    assert {"l_gen", "l_ce", "l_bn", "l_div", "l_dis"} <= set(metricas)


# ------------------------------------------------------------
# Corrida completa
# ------------------------------------------------------------

def test_cero_epocas_devuelve_alumno_nuevo(toy_bundle, toy_test):
    cfg = replace(TOY_CFG, epochs=0)
    resultado = run_fedsyn(toy_bundle, "cnn1", cfg, test=toy_test)
    nuevo = build_model("cnn1", 4, cfg.seed, in_channels=1, image_size=8, width=cfg.width)
    assert resultado.trace == []
    assert torch.equal(resultado.model.flat_parameters(), nuevo.flat_parameters())
    assert resultado.final_accuracy == evaluate(nuevo, toy_test)


def test_corrida_escribe_artefactos(tmp_path, toy_bundle, toy_test):
    cfg = replace(TOY_CFG, dump_every=3)
    resultado = run_fedsyn(toy_bundle, "cnn1", cfg, test=toy_test, out_dir=tmp_path)

    lineas = (tmp_path / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lineas) == cfg.epochs
    primero = json.loads(lineas[0])
    assert set(primero) == {"round", "epoch", "l_gen", "l_ce", "l_bn", "l_div", "l_dis", "acc", "wall_ms"}

    resumen = json.loads((tmp_path / "result.json").read_text(encoding="utf-8"))
    assert resumen["final_accuracy"] == resultado.final_accuracy
    assert len(resumen["client_accuracies"]) == 2

    modelo, manifest = load_checkpoint(tmp_path / "student.pt")
    assert manifest["arch_id"] == "cnn1"
    assert torch.equal(modelo.flat_parameters(), resultado.model.flat_parameters())
    assert (tmp_path / "samples" / "round1_epoch3.png").exists()


def test_misma_semilla_misma_traza(tmp_path, toy_bundle, toy_test):
    a = run_fedsyn(toy_bundle, "cnn1", TOY_CFG, test=toy_test, out_dir=tmp_path / "a")
    b = run_fedsyn(toy_bundle, "cnn1", TOY_CFG, test=toy_test, out_dir=tmp_path / "b")
    assert _sin_tiempo(a.trace) == _sin_tiempo(b.trace)
    assert torch.equal(a.model.flat_parameters(), b.model.flat_parameters())

    def leer(ruta):
        return [{k: v for k, v in json.loads(l).items() if k != "wall_ms"}
                for l in ruta.read_text(encoding="utf-8").splitlines()]

    assert leer(tmp_path / "a" / "metrics.jsonl") == leer(tmp_path / "b" / "metrics.jsonl")


def test_curva_un_punto_por_evaluacion(toy_bundle, toy_test):
    cfg = replace(TOY_CFG, epochs=5, eval_every=2)
    resultado = run_fedsyn(toy_bundle, "cnn1", cfg, test=toy_test)
    assert [e for _, e, _ in resultado.accuracy_curve()] == [2, 4, 5]


def test_bundle_heterogeneo_sin_agregar_parametros(toy_train, toy_test):
    plan = dirichlet_partition(toy_train, alpha=1.0, m=2, seed=0)
    bundle = train_all_clients(plan, toy_train, ["cnn1", "cnn2"], TOY_LOCAL, width=0.25)
    resultado = run_fedsyn(bundle, "cnn2", TOY_CFG, test=toy_test)
    assert len(resultado.trace) == TOY_CFG.epochs
    assert 0.0 <= resultado.final_accuracy <= 1.0
    assert len(resultado.client_accuracies) == 2


def test_bundle_queda_intacto(toy_bundle, toy_test):
    antes = [c.flat_parameters() for c in toy_bundle.clients]
    stats = [c.bn_layers()[0].running_mean.clone() for c in toy_bundle.clients]
    run_fedsyn(toy_bundle, "cnn1", TOY_CFG, test=toy_test)
    for a, s, c in zip(antes, stats, toy_bundle.clients):
        assert torch.equal(a, c.flat_parameters())
        assert torch.equal(s, c.bn_layers()[0].running_mean)
        assert all(p.requires_grad for p in c.parameters())


# ------------------------------------------------------------
# Multi-ronda
# ------------------------------------------------------------

def test_una_ronda_es_el_pipeline_directo(toy_train, toy_test):
    plan = dirichlet_partition(toy_train, alpha=1.0, m=2, seed=0)
    multi = run_multiround(toy_train, plan, ["cnn1", "cnn1"], TOY_CFG, TOY_LOCAL, test=toy_test)

    bundle = train_all_clients(plan, toy_train, ["cnn1", "cnn1"], TOY_LOCAL, width=TOY_CFG.width)
    directo = run_fedsyn(bundle, "cnn1", TOY_CFG, test=toy_test)

    assert _sin_tiempo(multi.trace) == _sin_tiempo(directo.trace)
    assert multi.final_accuracy == directo.final_accuracy


def test_varias_rondas(tmp_path, toy_train, toy_test):
    plan = dirichlet_partition(toy_train, alpha=1.0, m=2, seed=0)
    cfg = replace(TOY_CFG, rounds=2)
    resultado = run_multiround(toy_train, plan, ["cnn1", "cnn1"], cfg, TOY_LOCAL, test=toy_test, out_dir=tmp_path)

    assert [r.round for r in resultado.trace] == [1] * cfg.epochs + [2] * cfg.epochs
    lineas = (tmp_path / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lineas) == 2 * cfg.epochs
    resumen = json.loads((tmp_path / "result.json").read_text(encoding="utf-8"))
    assert resumen["epochs"] == 2 * cfg.epochs


def test_multironda_heterogenea_no_soportada(toy_train):
    plan = dirichlet_partition(toy_train, alpha=1.0, m=2, seed=0)
    with pytest.raises(UnsupportedOperationError):
        run_multiround(toy_train, plan, ["cnn1", "cnn2"], replace(TOY_CFG, rounds=2), TOY_LOCAL)


# ------------------------------------------------------------
# Configuración
# ------------------------------------------------------------

def test_config_desde_preset_y_overrides():
    cfg, local = configs_from_dict({"epochs": 7, "local": {"epochs": 3}}, preset="desk-mnist", overrides={"seed": 9})
    assert cfg.epochs == 7 and cfg.t_s == 20 and cfg.width == 0.5 and cfg.seed == 9
    assert local.epochs == 3 and local.seed == 9


@pytest.mark.parametrize("datos", [{"epocas": 3}, {"t_s": 0}, {"lambda1": -1.0}, {"bn_norm": "l1"}])
def test_config_invalida(datos):
    with pytest.raises(ConfigError):
        configs_from_dict(datos)
