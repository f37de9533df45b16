# harness/spec.py
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from config import configs_from_dict, read_toml
from errors import ConfigError
from fedsyn.distillation import FedSynConfig
from federated.local_training import LocalTrainConfig
from models.zoo import ARCHITECTURES

# Variantes de la pérdida del generador como simples configuraciones
METHODS = {
    "fedavg": None,
    "fedsyn": {},
    "fedsyn_ce_only": {"lambda1": 0.0, "lambda2": 0.0},
    "fedsyn_no_bn": {"lambda1": 0.0},
    "fedsyn_no_div": {"lambda2": 0.0},
}


@dataclass(frozen=True)
class Cell:
    dataset: str
    alpha: float
    m: int
    archs: tuple
    method: str
    local_epochs: int
    rounds: int

    def coordinates(self) -> dict:
        return {
            "dataset": self.dataset,
            "alpha": self.alpha,
            "m": self.m,
            "archs": list(self.archs),
            "method": self.method,
            "local_epochs": self.local_epochs,
            "rounds": self.rounds,
        }


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: str
    alphas: tuple
    clients: tuple
    archs: object
    methods: tuple
    fedsyn: FedSynConfig = field(default_factory=FedSynConfig)
    local: LocalTrainConfig = field(default_factory=LocalTrainConfig)
    repeats: int = 1
    seed_base: int = 0
    student: str | None = None
    local_epochs: tuple = ()
    rounds: tuple = ()

    def __post_init__(self):
        for nombre in ("alphas", "clients", "methods"):
            valor = getattr(self, nombre)
            if not valor:
                raise ConfigError(f"La grilla {nombre} no puede estar vacía")
            object.__setattr__(self, nombre, tuple(valor))
        object.__setattr__(self, "local_epochs", tuple(self.local_epochs))
        object.__setattr__(self, "rounds", tuple(self.rounds))
        if not isinstance(self.archs, str):
            object.__setattr__(self, "archs", tuple(self.archs))

        desconocidos = [m for m in self.methods if m not in METHODS]
        if desconocidos:
            raise ConfigError(f"Métodos desconocidos: {desconocidos}. Válidos: {sorted(METHODS)}")
        archs = [self.archs] if isinstance(self.archs, str) else list(self.archs)
        malas = [a for a in archs + ([self.student] if self.student else []) if a not in ARCHITECTURES]
        if malas:
            raise ConfigError(f"Arquitecturas desconocidas: {malas}")
        if self.repeats < 1:
            raise ConfigError("repeats debe ser ≥ 1")
        if any(a <= 0 for a in self.alphas):
            raise ConfigError("Todos los alpha deben ser positivos")

    def archs_for(self, m: int) -> tuple:
        if isinstance(self.archs, str):
            return (self.archs,) * m
        if len(self.archs) != m:
            raise ConfigError(f"Asignación heterogénea de {len(self.archs)} arquitecturas para m={m}")
        return self.archs

    def seeds(self) -> list:
        return list(range(self.seed_base, self.seed_base + self.repeats))

    def cells(self) -> list:
        epocas = self.local_epochs or (self.local.epochs,)
        rondas = self.rounds or (self.fedsyn.rounds,)
        celdas = []
        for alpha in self.alphas:
            for m in self.clients:
                archs = self.archs_for(m)
                for e in epocas:
                    for r in rondas:
                        for metodo in self.methods:
                            # FedAvg es one-shot: no participa del eje de rondas
                            if metodo == "fedavg" and r > 1:
                                continue
                            celdas.append(Cell(self.dataset, float(alpha), int(m), archs, metodo, int(e), int(r)))
        return celdas

    def method_config(self, cell: Cell, seed: int) -> FedSynConfig:
        overrides = METHODS[cell.method] or {}
        return replace(self.fedsyn, seed=seed, rounds=cell.rounds, **overrides)

    def local_config(self, cell: Cell, seed: int) -> LocalTrainConfig:
        return replace(self.local, epochs=cell.local_epochs, seed=seed)

    def student_for(self, cell: Cell) -> str:
        return self.student or cell.archs[0]

    def cell_key(self, cell: Cell) -> str:
        """SHA-256 de las coordenadas de la celda más todo lo que cambia su resultado."""
        canonico = {
            **cell.coordinates(),
            "fedsyn": asdict(self.method_config(cell, 0)),
            "local": asdict(self.local_config(cell, 0)),
            "student": self.student_for(cell),
            "repeats": self.repeats,
            "seed_base": self.seed_base,
        }
        texto = json.dumps(canonico, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(texto.encode("utf-8")).hexdigest()


def load_spec(path) -> ExperimentSpec:
    """
    Lee la spec de experimentos (TOML declarativo con grillas).

        dataset = "MNIST"
        alphas = [0.1, 0.5]
        clients = [5]
        archs = "cnn1"              # o lista heterogénea de largo m
        methods = ["fedavg", "fedsyn"]
        repeats = 3
        preset = "desk-mnist"
        [fedsyn]  ...               # claves de FedSynConfig
        [local]   ...               # claves de LocalTrainConfig
    """
    datos = read_toml(path)
    preset = datos.pop("preset", None)
    fedsyn_tabla = dict(datos.pop("fedsyn", {}))
    fedsyn_tabla["local"] = datos.pop("local", {})
    fedsyn_cfg, local_cfg = configs_from_dict(fedsyn_tabla, preset=preset, origen=str(path))

    faltantes = [k for k in ("dataset", "alphas", "clients", "archs", "methods") if k not in datos]
    if faltantes:
        raise ConfigError(f"Faltan claves obligatorias en {path}: {faltantes}")

    spec = ExperimentSpec(
        dataset=datos.pop("dataset"),
        alphas=datos.pop("alphas"),
        clients=datos.pop("clients"),
        archs=datos.pop("archs"),
        methods=datos.pop("methods"),
        fedsyn=fedsyn_cfg,
        local=local_cfg,
        repeats=int(datos.pop("repeats", 1)),
        seed_base=int(datos.pop("seed_base", 0)),
        student=datos.pop("student", None),
        local_epochs=datos.pop("local_epochs", ()),
        rounds=datos.pop("rounds", ()),
    )
    if datos:
        raise ConfigError(f"Claves desconocidas en {path}: {sorted(datos)}")
    return spec
