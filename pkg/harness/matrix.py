# harness/matrix.py
import time
from pathlib import Path

from data.datasets import load_dataset
from data.partition import dirichlet_partition
from federated.ensemble import evaluate, fedavg_aggregate
from federated.local_training import train_all_clients
from fedsyn.distillation import run_fedsyn, run_multiround
from harness.spec import Cell, ExperimentSpec
from harness.store import ReportRow, ResultsStore, mean_std
from logs import get_logger


class _Corrida:
    """Estado compartido de una llamada a run_matrix: datasets y bundles ya entrenados."""

    def __init__(self, spec: ExperimentSpec, runs_dir: Path | None, workers, device):
        self.spec = spec
        self.runs_dir = runs_dir
        self.workers = workers
        self.device = device
        self.train = load_dataset(spec.dataset, "train")
        self.test = load_dataset(spec.dataset, "test")
        self._bundles = {}

    def bundle(self, cell: Cell, seed: int):
        # FedAvg y las variantes de FedSyn de una misma celda comparten clientes (comparación pareada)
        clave = (cell.alpha, cell.m, cell.archs, cell.local_epochs, seed)
        if clave not in self._bundles:
            plan = dirichlet_partition(self.train, cell.alpha, cell.m, seed)
            self._bundles[clave] = train_all_clients(
                plan, self.train, cell.archs, self.spec.local_config(cell, seed),
                width=self.spec.fedsyn.width, workers=self.workers, device=self.device,
            )
        return self._bundles[clave]

    def ejecutar(self, cell: Cell, seed: int, key: str) -> dict:
        """Corre una semilla de la celda; devuelve acc global, acc media de clientes y curva."""
        spec = self.spec
        out_dir = self.runs_dir / key[:16] / f"seed{seed}" if self.runs_dir else None

        if cell.method == "fedavg":
            bundle = self.bundle(cell, seed)
            global_model = fedavg_aggregate(bundle)
            clientes = [evaluate(c, self.test) for c in bundle.clients]
            return {
                "acc": evaluate(global_model, self.test),
                "client_acc": sum(clientes) / len(clientes),
                "curve": [],
            }

        cfg = spec.method_config(cell, seed)
        if cell.rounds > 1:
            plan = dirichlet_partition(self.train, cell.alpha, cell.m, seed)
            resultado = run_multiround(
                self.train, plan, cell.archs, cfg, spec.local_config(cell, seed),
                test=self.test, student_arch=spec.student_for(cell), out_dir=out_dir,
                workers=self.workers, device=self.device,
            )
        else:
            resultado = run_fedsyn(
                self.bundle(cell, seed), spec.student_for(cell), cfg,
                test=self.test, out_dir=out_dir, device=self.device,
            )

        clientes = resultado.client_accuracies
        curva = [[(r - 1) * cfg.epochs + e, acc] for r, e, acc in resultado.accuracy_curve()]
        return {
            "acc": resultado.final_accuracy,
            "client_acc": sum(clientes) / len(clientes) if clientes else None,
            "curve": curva,
        }


def run_matrix(
    spec: ExperimentSpec,
    store: ResultsStore,
    force: bool = False,
    runs_dir=None,
    workers: int | None = None,
    device=None,
) -> list:
    """
    Ejecuta cada celda de la grilla con las semillas seed_base..seed_base+repeats−1.

    Las celdas ya presentes (y exitosas) en el store se saltean salvo `force`.
    Una celda que falla queda registrada con status="failed" y la matriz sigue.
    Devuelve las filas nuevas agregadas al store.
    """
    logger = get_logger()
    celdas = spec.cells()
    pendientes = [(c, spec.cell_key(c)) for c in celdas]
    if not force:
        pendientes = [(c, k) for c, k in pendientes if not store.has(k)]

    logger.info(f"🧪 Matriz {spec.dataset}: {len(celdas)} celdas, {len(pendientes)} pendientes")
    if not pendientes:
        return []

    corrida = _Corrida(spec, Path(runs_dir) if runs_dir else None, workers, device)
    nuevas = []
    for n, (celda, key) in enumerate(pendientes, start=1):
        inicio = time.perf_counter()
        fila = ReportRow(key=key, coordinates=celda.coordinates())
        try:
            resultados = {seed: corrida.ejecutar(celda, seed, key) for seed in spec.seeds()}
            fila.accuracies = [resultados[s]["acc"] for s in spec.seeds()]
            fila.mean_acc, fila.std_acc = mean_std(fila.accuracies)
            clientes = [r["client_acc"] for r in resultados.values() if r["client_acc"] is not None]
            fila.client_acc_mean = sum(clientes) / len(clientes) if clientes else None
            fila.curves = {str(s): r["curve"] for s, r in resultados.items()}
        except Exception as e:
            logger.exception(f"❌ Celda {n}/{len(pendientes)} falló: {celda.coordinates()}")
            fila.status = "failed"
            fila.error = f"{type(e).__name__}: {e}"

        fila.runtime_s = time.perf_counter() - inicio
        store.append(fila)
        nuevas.append(fila)
        if fila.ok:
            logger.info(
                f"✅ Celda {n}/{len(pendientes)} {celda.method} α={celda.alpha} m={celda.m}: "
                f"acc={fila.mean_acc:.4f} ({fila.runtime_s:.1f}s)"
            )

    return nuevas
