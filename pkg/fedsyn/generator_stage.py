# fedsyn/generator_stage.py
"""
Etapa 1: entrenar el generador contra el ensemble congelado (y el modelo
global actual) con ℓ_gen = ℓ_CE + λ1·ℓ_BN + λ2·ℓ_div.
"""
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from errors import BNCaptureMismatchError, GeneratorDivergedError, NonFiniteError
from federated.ensemble import EnsembleBundle, ensemble_forward
from models.base import bn_layers
from models.generator import generate

EPS = 1e-8
BN_NORMS = ("l2", "squared")


@dataclass(frozen=True)
class GenLossWeights:
    lambda1: float = 1.0
    lambda2: float = 0.5

    def __post_init__(self):
        for nombre in ("lambda1", "lambda2"):
            valor = getattr(self, nombre)
            if not (valor >= 0 and valor < float("inf")):
                raise ValueError(f"{nombre} debe ser finito y ≥ 0 (recibido {valor})")


@dataclass
class SyntheticBatch:
    z: torch.Tensor
    y: torch.Tensor
    x: torch.Tensor | None = None


@dataclass
class GenLossResult:
    loss: torch.Tensor
    l_ce: float
    l_bn: float
    l_div: float
    grads: tuple


def _check_finite(*tensores, que: str = "logits") -> None:
    for t in tensores:
        if not torch.isfinite(t).all():
            raise NonFiniteError(f"{que} contiene valores no finitos")


# ============================================================
# 🎲 MUESTREO DE RUIDO Y ETIQUETAS
# ============================================================

def sample_noise_and_labels(b: int, noise_dim: int, num_classes: int, rng: torch.Generator):
    """z ~ N(0, I) de b×noise_dim y etiquetas one-hot uniformes b×C."""
    if b < 1 or noise_dim < 1 or num_classes < 1:
        raise ValueError(f"Parámetros inválidos: b={b}, noise_dim={noise_dim}, C={num_classes}")
    z = torch.randn(b, noise_dim, generator=rng)
    clases = torch.randint(num_classes, (b,), generator=rng)
    y = F.one_hot(clases, num_classes).float()
    return z, y


# ============================================================
# 📉 TÉRMINOS DE LA PÉRDIDA
# ============================================================

def ce_gen_loss(avg_logits: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Media de −Σ y·log softmax(D(x̂)): primero se promedian logits, luego softmax."""
    if avg_logits.shape != y.shape:
        raise ValueError(f"Formas distintas: logits {tuple(avg_logits.shape)} vs y {tuple(y.shape)}")
    _check_finite(avg_logits)
    return -(y * F.log_softmax(avg_logits, dim=1)).sum(dim=1).mean()


def bn_loss(captures, bundle: EnsembleBundle, norm: str = "l2") -> torch.Tensor:
    """
    (1/m) Σ_k Σ_l ‖μ_l(x̂) − μ_{k,l}‖ + ‖σ²_l(x̂) − σ²_{k,l}‖.

    Las estadísticas se miden en las capas BN de cada cliente. `norm="squared"`
    usa la norma L2 al cuadrado. Clientes sin BN aportan 0.
    """
    if norm not in BN_NORMS:
        raise ValueError(f"bn_norm desconocida: {norm}")
    if len(captures) != bundle.m:
        raise BNCaptureMismatchError(f"{len(captures)} capturas para {bundle.m} clientes")

    def distancia(a, b):
        d = torch.linalg.vector_norm(a - b)
        return d * d if norm == "squared" else d

    total = None
    for k, (captura, cliente) in enumerate(zip(captures, bundle.clients)):
        capas = bn_layers(cliente)
        if captura is None or len(captura) != len(capas):
            raise BNCaptureMismatchError(
                f"Cliente {k}: {0 if captura is None else len(captura)} capturas para {len(capas)} capas BN"
            )
        for l, capa in enumerate(capas):
            mu, var = captura.means[l], captura.variances[l]
            if mu is None or mu.shape != capa.running_mean.shape:
                raise BNCaptureMismatchError(f"Cliente {k}, capa {l}: estadística ausente o de otro tamaño")
            termino = distancia(mu, capa.running_mean) + distancia(var, capa.running_var)
            total = termino if total is None else total + termino

    if total is None:
        return torch.zeros(())
    return total / bundle.m


def _kl_rows(teacher_logits, student_logits, temperature: float) -> torch.Tensor:
    """KL(softmax(t/τ) ‖ softmax(s/τ)) por fila, con piso ε dentro de los logaritmos."""
    p = F.softmax(teacher_logits / temperature, dim=1)
    q = F.softmax(student_logits / temperature, dim=1)
    return (p * (torch.log(p + EPS) - torch.log(q + EPS))).sum(dim=1)


def div_loss(avg_logits: torch.Tensor, student_logits: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """
    −(1/b) Σ_i ω_i · KL(D(x̂_i) ‖ f_S(x̂_i)), ω_i = 1 si difieren los argmax.

    argmax desempata por el menor índice en ambos lados.
    """
    if avg_logits.shape != student_logits.shape:
        raise ValueError("Logits del ensemble y del estudiante con formas distintas")
    _check_finite(avg_logits, student_logits)
    omega = (avg_logits.argmax(dim=1) != student_logits.argmax(dim=1)).to(avg_logits.dtype)
    return -(omega * _kl_rows(avg_logits, student_logits, temperature)).mean()


# ============================================================
# 🧩 PÉRDIDA DEL GENERADOR
# ============================================================

def gen_loss(
    batch: SyntheticBatch,
    gen,
    bundle: EnsembleBundle,
    student,
    w: GenLossWeights,
    temperature: float = 1.0,
    bn_norm: str = "l2",
    weighted_logits: bool = False,
) -> GenLossResult:
    """
    ℓ_gen sobre x̂ = G(z) regenerado acá mismo, y su gradiente solo respecto de θ_G.

    El gradiente se pide con autograd.grad sobre los parámetros del generador:
    θ_S y los θ^k nunca reciben .grad.
    """
    x = generate(gen, batch.z)
    batch.x = x

    avg, capturas = ensemble_forward(bundle, x, capture_stats=True, weighted=weighted_logits)
    student.eval()
    s_logits = student(x)

    l_ce = ce_gen_loss(avg, batch.y)
    l_bn = bn_loss(capturas, bundle, norm=bn_norm).to(l_ce)
    l_div = div_loss(avg, s_logits, temperature=temperature)
    loss = l_ce + w.lambda1 * l_bn + w.lambda2 * l_div

    if not torch.isfinite(loss):
        raise NonFiniteError(
            f"ℓ_gen no finita (ce={l_ce.item()}, bn={l_bn.item()}, div={l_div.item()})"
        )

    params = [p for p in gen.parameters() if p.requires_grad]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = tuple(torch.zeros_like(p) if g is None else g for p, g in zip(params, grads))
    return GenLossResult(
        loss=loss.detach(),
        l_ce=l_ce.item(),
        l_bn=l_bn.item(),
        l_div=l_div.item(),
        grads=grads,
    )


def generator_inner_loop(
    gen,
    bundle: EnsembleBundle,
    student,
    z: torch.Tensor,
    y: torch.Tensor,
    t_g: int,
    lr_g: float,
    w: GenLossWeights,
    optimizer=None,
    temperature: float = 1.0,
    bn_norm: str = "l2",
    weighted_logits: bool = False,
):
    """
    T_G pasos de Adam sobre θ_G con el mismo (z, y).

    Devuelve (gen, lista de GenLossResult). Si θ_G deja de ser finito se aborta.
    """
    resultados = []
    if t_g == 0:
        return gen, resultados

    params = [p for p in gen.parameters() if p.requires_grad]
    optimizer = optimizer or torch.optim.Adam(params, lr=lr_g)
    lote = SyntheticBatch(z=z, y=y)

    gen.train()
    for paso in range(t_g):
        res = gen_loss(
            lote, gen, bundle, student, w,
            temperature=temperature, bn_norm=bn_norm, weighted_logits=weighted_logits,
        )
        optimizer.zero_grad(set_to_none=True)
        for p, g in zip(params, res.grads):
            p.grad = g
        optimizer.step()

        if not all(torch.isfinite(p).all() for p in params):
            raise GeneratorDivergedError(f"θ_G dejó de ser finito en el paso {paso + 1}/{t_g}")
        resultados.append(res)

    return gen, resultados
