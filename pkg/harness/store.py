# harness/store.py
import fcntl
import json
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
import pytz

from config import Config
from errors import StoreError


def _ahora() -> str:
    return datetime.now(pytz.timezone(Config.TZ)).isoformat(timespec="seconds")


@dataclass
class ReportRow:
    key: str
    coordinates: dict
    accuracies: list = field(default_factory=list)
    mean_acc: float | None = None
    std_acc: float | None = None
    client_acc_mean: float | None = None
    runtime_s: float = 0.0
    curves: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None
    created_at: str = field(default_factory=_ahora)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def from_dict(cls, data: dict) -> "ReportRow":
        try:
            return cls(**data)
        except TypeError as e:
            raise StoreError(f"Fila con campos inesperados: {e}") from e


def mean_std(valores: list):
    """Media y desvío muestral; el desvío es None con una sola repetición."""
    if not valores:
        return None, None
    media = float(np.mean(valores))
    if len(valores) < 2:
        return media, None
    return media, float(np.std(valores, ddof=1))


class ResultsStore:
    """
    Store append-only en JSONL, una fila por celda ejecutada.

    Cada escritura toma un lock exclusivo (fcntl) para que dos procesos
    del harness puedan compartir el mismo archivo. Si una clave aparece
    varias veces, gana la última fila.
    """

    def __init__(self, path):
        self.path = Path(path)

    @contextmanager
    def _lock(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        lock_file = self.path.with_name(self.path.name + ".lock")
        with open(lock_file, "w") as lf:
            fcntl.flock(lf.fileno(), fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(lf.fileno(), fcntl.LOCK_UN)

    def append(self, row: ReportRow) -> None:
        linea = json.dumps(asdict(row), sort_keys=True)
        with self._lock():
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(linea + "\n")

    def rows(self) -> list:
        if not self.path.exists():
            return []
        filas = []
        with open(self.path, encoding="utf-8") as f:
            for n, linea in enumerate(f, start=1):
                if not linea.strip():
                    continue
                try:
                    filas.append(ReportRow.from_dict(json.loads(linea)))
                except json.JSONDecodeError as e:
                    raise StoreError(f"{self.path}:{n} no es JSON válido") from e
        return filas

    def latest(self) -> dict:
        ultimas = {}
        for fila in self.rows():
            ultimas[fila.key] = fila
        return ultimas

    def has(self, key: str) -> bool:
        """True solo si la última fila de la clave terminó bien (las fallidas se reintentan)."""
        fila = self.latest().get(key)
        return fila is not None and fila.ok

    def __len__(self) -> int:
        return len(self.latest())
