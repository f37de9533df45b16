import pytest
import torch

from conftest import TinyBN
from errors import CheckpointError, NonFiniteError, ShapeMismatchError, UnknownArchitectureError
from models.base import bn_layer_shapes, forward_logits
from models.checkpoint import load_checkpoint, save_checkpoint
from models.generator import frozen_bn_stats, generate
from models.zoo import ARCHITECTURES, build_generator, build_model


@pytest.mark.parametrize("arch", sorted(ARCHITECTURES))
def test_misma_semilla_mismos_parametros(arch):
    a = build_model(arch, 10, seed=7, in_channels=1, image_size=28, width=0.25)
    b = build_model(arch, 10, seed=7, in_channels=1, image_size=28, width=0.25)
    c = build_model(arch, 10, seed=8, in_channels=1, image_size=28, width=0.25)
    assert torch.equal(a.flat_parameters(), b.flat_parameters())
    assert not torch.equal(a.flat_parameters(), c.flat_parameters())


@pytest.mark.parametrize("arch", sorted(ARCHITECTURES))
@pytest.mark.parametrize("canales, lado", [(1, 28), (3, 32)])
def test_forma_de_logits(arch, canales, lado):
    model = build_model(arch, 10, seed=0, in_channels=canales, image_size=lado, width=0.25)
    logits, captura = forward_logits(model, torch.randn(2, canales, lado, lado))
    assert logits.shape == (2, 10)
    assert captura is None


def test_build_model_no_toca_el_rng_global():
    torch.manual_seed(123)
    esperado = torch.rand(3)
    torch.manual_seed(123)
    build_model("cnn1", 10, seed=5)
    assert torch.equal(torch.rand(3), esperado)


def test_arquitectura_desconocida():
    with pytest.raises(UnknownArchitectureError, match="vgg"):
        build_model("vgg", 10, seed=0)


def test_batch_de_otra_forma():
    model = build_model("cnn1", 10, seed=0, in_channels=1, image_size=28)
    with pytest.raises(ShapeMismatchError):
        forward_logits(model, torch.randn(2, 3, 32, 32))


def test_captura_bn_igual_a_calculo_directo():
    torch.manual_seed(0)
    model = TinyBN()
    x = torch.randn(5, 1, 4, 4)
    _, captura = forward_logits(model, x, capture_stats=True)

    entrada_bn = model.conv(x)
    assert len(captura) == 1
    assert torch.allclose(captura.means[0], entrada_bn.mean(dim=(0, 2, 3)), atol=1e-6)
    assert torch.allclose(captura.variances[0], entrada_bn.var(dim=(0, 2, 3), unbiased=False), atol=1e-6)


def test_captura_un_registro_por_capa_bn():
    model = build_model("resnet18", 10, seed=0, width=0.125)
    _, captura = forward_logits(model, torch.randn(3, 3, 32, 32), capture_stats=True)
    assert len(captura) == len(model.bn_layers())
    assert [int(m.shape[0]) for m in captura.means] == bn_layer_shapes(model)


def test_captura_no_cambia_running_stats():
    model = TinyBN()
    antes = model.bn.running_mean.clone()
    forward_logits(model, torch.randn(4, 1, 4, 4) + 3.0, capture_stats=True)
    assert torch.equal(model.bn.running_mean, antes)


def test_captura_wrn_igual_a_recalculo_con_hooks():
    model = build_model("wrn16_1", 10, seed=0, width=0.5)
    capas = model.bn_layers()
    vistas = {}

    def registrar(l):
        def hook(_modulo, entradas, _salida):
            vistas[l] = entradas[0].detach().clone()
        return hook

    handles = [capa.register_forward_hook(registrar(l)) for l, capa in enumerate(capas)]
    try:
        with torch.no_grad():
            _, captura = forward_logits(model, torch.randn(16, 3, 32, 32), capture_stats=True)
    finally:
        for h in handles:
            h.remove()

    assert len(captura) == len(capas) == len(vistas)
    for l in range(len(capas)):
        entrada = vistas[l]
        assert torch.allclose(captura.means[l], entrada.mean(dim=(0, 2, 3)), atol=1e-5)
        assert torch.allclose(captura.variances[l], entrada.var(dim=(0, 2, 3), unbiased=False), atol=1e-5)


@pytest.mark.parametrize("arch", sorted(ARCHITECTURES))
def test_fila_duplicada_da_logits_identicos(arch):
    model = build_model(arch, 10, seed=0, in_channels=1, image_size=28, width=0.25)
    x = torch.randn(1, 1, 28, 28)
    with torch.no_grad():
        solo, _ = forward_logits(model, x)
        doble, _ = forward_logits(model, x.repeat(2, 1, 1, 1))
    assert torch.equal(doble[0], doble[1])
    assert torch.allclose(doble[0], solo[0], atol=1e-5)


def test_vector_plano_ida_y_vuelta():
    model = build_model("cnn2", 10, seed=1, in_channels=1, image_size=28, width=0.5)
    vector = model.flat_parameters()
    model.load_flat_parameters(torch.zeros_like(vector))
    assert model.flat_parameters().abs().sum() == 0
    model.load_flat_parameters(vector)
    assert torch.equal(model.flat_parameters(), vector)
    with pytest.raises(ShapeMismatchError):
        model.load_flat_parameters(vector[:-1])


# ------------------------------------------------------------
# Generador
# ------------------------------------------------------------

def _gen(**kw):
    return build_generator(16, (1, 28, 28), (0.1307,), (0.3081,), seed=0, width=0.25, **kw)


def test_generador_forma_y_rango():
    gen = _gen()
    x = generate(gen, torch.randn(6, 16))
    assert x.shape == (6, 1, 28, 28)
    # tanh en [0, 1] normalizado con la media/desvío de MNIST
    minimo, maximo = (0 - 0.1307) / 0.3081, (1 - 0.1307) / 0.3081
    assert x.min() >= minimo - 1e-5 and x.max() <= maximo + 1e-5


def test_generador_batch_vacio():
    x = generate(_gen(), torch.randn(0, 16))
    assert x.shape == (0, 1, 28, 28)


def test_generador_permutacion_de_filas():
    gen = _gen()
    z = torch.randn(8, 16)
    perm = torch.randperm(8)
    assert torch.allclose(generate(gen, z)[perm], generate(gen, z[perm]), atol=1e-5)


def test_generador_valida_z():
    gen = _gen()
    with pytest.raises(ShapeMismatchError):
        generate(gen, torch.randn(4, 15))
    z = torch.randn(4, 16)
    z[0, 0] = float("nan")
    with pytest.raises(NonFiniteError):
        generate(gen, z)


def test_generador_en_eval_filas_independientes():
    gen = _gen()
    generate(gen, torch.randn(32, 16))
    gen.eval()
    z = torch.randn(6, 16)
    with torch.no_grad():
        assert torch.allclose(generate(gen, z)[:2], generate(gen, z[:2]), atol=1e-5)


def test_generador_train_actualiza_running_stats():
    gen = _gen()
    capa = gen.conv_blocks0[0]
    antes = capa.running_mean.clone()
    generate(gen, torch.randn(4, 16))
    assert not torch.equal(capa.running_mean, antes)


def test_frozen_bn_stats_no_toca_buffers():
    gen = _gen()
    z = torch.randn(4, 16)
    antes = {n: b.clone() for n, b in gen.named_buffers()}
    with torch.no_grad(), frozen_bn_stats(gen):
        x = generate(gen, z)
    assert all(torch.equal(b, antes[n]) for n, b in gen.named_buffers())
    assert all(m.track_running_stats for m in gen.modules() if isinstance(m, torch.nn.BatchNorm2d))
    # mismas estadísticas de batch que un forward normal en modo train
    with torch.no_grad():
        assert torch.allclose(x, generate(gen, z), atol=1e-6)


# ------------------------------------------------------------
# Checkpoints
# ------------------------------------------------------------

def test_checkpoint_ida_y_vuelta(tmp_path):
    model = build_model("wrn16_1", 10, seed=3, width=0.5)
    ruta = save_checkpoint(model, tmp_path / "m.ckpt", dataset="CIFAR10")
    cargado, manifest = load_checkpoint(ruta)
    assert manifest["arch_id"] == "wrn16_1"
    assert manifest["dataset"] == "CIFAR10"
    assert manifest["bn_layer_shapes"] == bn_layer_shapes(model)
    assert torch.equal(cargado.flat_parameters(), model.flat_parameters())
    for a, b in zip(cargado.buffers(), model.buffers()):
        assert torch.equal(a, b)


def test_checkpoint_sin_manifest(tmp_path):
    model = build_model("cnn1", 10, seed=0)
    ruta = save_checkpoint(model, tmp_path / "m.pt")
    (tmp_path / "m.json").unlink()
    with pytest.raises(CheckpointError):
        load_checkpoint(ruta)
