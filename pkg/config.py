import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import fields, replace
from pathlib import Path

from dotenv import load_dotenv

from errors import ConfigError

# Cargar variables del archivo .env
load_dotenv()


def _env_bool(nombre: str, defecto: str) -> bool:
    return os.getenv(nombre, defecto).strip().lower() in ("1", "true", "yes", "si")


class Config:
    SECRET_KEY = os.getenv("SECRET_KEY", "clave_por_defecto_segura")

    # ============================================================
    # 📁 RUTAS
    # ============================================================

    DATA_DIR = os.getenv("FEDSYN_DATA_DIR", "./data")
    RESULTS_DIR = os.getenv("FEDSYN_RESULTS_DIR", "./results")

    # ============================================================
    # ⚙️ EJECUCIÓN
    # ============================================================

    DEVICE = os.getenv("FEDSYN_DEVICE", "cpu")
    DETERMINISTIC = _env_bool("FEDSYN_DETERMINISTIC", "true")
    DOWNLOAD = _env_bool("FEDSYN_DOWNLOAD", "true")
    WORKERS = int(os.getenv("FEDSYN_WORKERS", "1"))

    # Zona horaria para sellar registros del store
    TZ = os.getenv("FEDSYN_TZ", "UTC")

    # ============================================================
    # 🐞 DEBUG
    # ============================================================

    DEBUG = os.getenv("FLASK_DEBUG", "false").lower() == "true"


# ============================================================
# 🖼️ NORMALIZACIÓN POR DATASET (fija, no se recalcula)
# ============================================================

DATASET_STATS = {
    "MNIST": {
        "mean": (0.1307,),
        "std": (0.3081,),
        "shape": (1, 28, 28),
        "num_classes": 10,
    },
    "FashionMNIST": {
        "mean": (0.2860,),
        "std": (0.3530,),
        "shape": (1, 28, 28),
        "num_classes": 10,
    },
    "CIFAR10": {
        "mean": (0.4914, 0.4822, 0.4465),
        "std": (0.2470, 0.2435, 0.2616),
        "shape": (3, 32, 32),
        "num_classes": 10,
    },
    "CIFAR100": {
        "mean": (0.5071, 0.4865, 0.4409),
        "std": (0.2673, 0.2564, 0.2762),
        "shape": (3, 32, 32),
        "num_classes": 100,
    },
    "SVHN": {
        "mean": (0.4377, 0.4438, 0.4728),
        "std": (0.1980, 0.2010, 0.1970),
        "shape": (3, 32, 32),
        "num_classes": 10,
    },
}


# ============================================================
# 🧪 PRESETS (desk-* = CI en laptop, paper-* = escala completa)
# ============================================================

_DESK = {
    "epochs": 50,
    "t_g": 30,
    "t_s": 20,
    "batch_size": 128,
    "lr_s": 0.01,
    "lr_g": 0.001,
    "momentum_s": 0.9,
    "lambda1": 1.0,
    "lambda2": 0.5,
    "eval_every": 5,
    "width": 0.5,
    "local": {"epochs": 20, "batch_size": 128, "learning_rate": 0.01, "momentum": 0.9},
}

_PAPER = {
    "epochs": 200,
    "t_g": 30,
    "t_s": 1,
    "batch_size": 128,
    "lr_s": 0.01,
    "lr_g": 0.001,
    "momentum_s": 0.9,
    "lambda1": 1.0,
    "lambda2": 0.5,
    "eval_every": 5,
    "width": 1.0,
    "local": {"epochs": 200, "batch_size": 128, "learning_rate": 0.01, "momentum": 0.9},
}

PRESETS = {
    "desk-mnist": _DESK,
    "desk-fmnist": _DESK,
    "desk-cifar10": {**_DESK, "local": {**_DESK["local"], "epochs": 10}},
    "paper-mnist": _PAPER,
    "paper-fmnist": _PAPER,
    "paper-cifar10": _PAPER,
    "paper-svhn": _PAPER,
}


def _coerce(dc, valores: dict, origen: str):
    nombres = {f.name for f in fields(dc)}
    desconocidas = set(valores) - nombres
    if desconocidas:
        raise ConfigError(f"Claves desconocidas en {origen}: {sorted(desconocidas)}")
    try:
        nuevo = replace(dc, **valores)
        nuevo.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Configuración inválida en {origen}: {e}") from e
    return nuevo


def read_toml(path) -> dict:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"No existe el archivo de configuración {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"TOML inválido en {path}: {e}") from e


def configs_from_dict(datos: dict, preset=None, overrides=None, origen: str = "config"):
    """
    Arma (FedSynConfig, LocalTrainConfig) desde un dict ya parseado.

    Orden de precedencia: valores por defecto < preset < datos < overrides.
    La clave "local" (tabla [local] en TOML) alimenta LocalTrainConfig.
    """
    from fedsyn.distillation import FedSynConfig
    from federated.local_training import LocalTrainConfig

    datos = dict(datos)
    preset = preset or datos.pop("preset", None)
    datos.pop("preset", None)

    base = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"Preset desconocido: {preset}")
        base = {k: (dict(v) if isinstance(v, dict) else v) for k, v in PRESETS[preset].items()}

    local_valores = {**base.pop("local", {}), **datos.pop("local", {})}
    run_valores = {**base, **datos, **(overrides or {})}
    local_valores.update(run_valores.pop("local", {}) or {})

    fedsyn_cfg = _coerce(FedSynConfig(), run_valores, origen)
    local_cfg = _coerce(LocalTrainConfig(seed=fedsyn_cfg.seed), local_valores, f"{origen} [local]")
    return fedsyn_cfg, local_cfg


def load_run_config(path=None, preset=None, overrides=None):
    """Devuelve (FedSynConfig, LocalTrainConfig) desde un TOML opcional más preset y overrides."""
    datos = read_toml(path) if path else {}
    return configs_from_dict(datos, preset=preset, overrides=overrides, origen=str(path or preset or "overrides"))


def apply_determinism(enabled: bool) -> None:
    import torch

    torch.use_deterministic_algorithms(enabled, warn_only=True)
    torch.backends.cudnn.deterministic = enabled
    torch.backends.cudnn.benchmark = not enabled
    if enabled:
        # requerido por cuBLAS cuando el modo determinista está activo
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")


def data_dir() -> Path:
    return Path(os.getenv("FEDSYN_DATA_DIR", Config.DATA_DIR))
