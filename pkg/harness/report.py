# harness/report.py
"""
Reporte del store: una tabla por dataset (métodos × α) en CSV y texto,
un libro report.xlsx y una figura de curvas de accuracy por fila.
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from openpyxl import Workbook  # noqa: E402
from openpyxl.styles import Alignment, Font  # noqa: E402
from openpyxl.utils import get_column_letter  # noqa: E402

from errors import StoreError  # noqa: E402
from harness.store import ResultsStore  # noqa: E402
from logs import get_logger  # noqa: E402

# Ejes que pasan al índice de la tabla solo si varían dentro del dataset
_EJES_EXTRA = ("m", "archs", "local_epochs", "rounds")


def _filas_ok(store: ResultsStore) -> list:
    ultimas = store.latest()
    if not ultimas:
        raise StoreError(f"El store {store.path} está vacío")
    filas = [f for f in ultimas.values() if f.ok]
    if not filas:
        raise StoreError(f"El store {store.path} no tiene filas exitosas")
    return filas


def results_frame(store: ResultsStore) -> pd.DataFrame:
    """Una fila del DataFrame por celda (la última fila de cada clave)."""
    registros = []
    for fila in _filas_ok(store):
        c = fila.coordinates
        registros.append({
            "key": fila.key,
            "dataset": c["dataset"],
            "method": c["method"],
            "alpha": c["alpha"],
            "m": c["m"],
            "archs": ",".join(c["archs"]),
            "local_epochs": c["local_epochs"],
            "rounds": c["rounds"],
            "mean_acc": fila.mean_acc,
            "std_acc": fila.std_acc,
            "client_acc_mean": fila.client_acc_mean,
            "runtime_s": fila.runtime_s,
            "repeats": len(fila.accuracies),
        })
    return pd.DataFrame(registros)


def dataset_tables(frame: pd.DataFrame) -> dict:
    """{dataset: tabla} con métodos (y los ejes que varían) como filas y α como columnas."""
    tablas = {}
    for dataset, sub in frame.groupby("dataset", sort=True):
        indice = ["method"] + [e for e in _EJES_EXTRA if sub[e].nunique() > 1]
        tabla = sub.pivot_table(index=indice, columns="alpha", values="mean_acc", aggfunc="first")
        tabla.columns = [str(a) for a in tabla.columns]
        tablas[dataset] = tabla
    return tablas


def _texto(tabla: pd.DataFrame, sub: pd.DataFrame) -> str:
    """Versión legible: media ± desvío en porcentaje."""
    def celda(fila):
        media = f"{100 * fila.mean_acc:.2f}"
        return media if pd.isna(fila.std_acc) else f"{media} ± {100 * fila.std_acc:.2f}"

    sub = sub.assign(valor=sub.apply(celda, axis=1), alpha=sub["alpha"].astype(str))
    legible = sub.pivot_table(index=list(tabla.index.names), columns="alpha", values="valor", aggfunc="first")
    return legible.to_string()


def build_workbook(frame: pd.DataFrame) -> Workbook:
    """Libro con una hoja por dataset, encabezados en negrita y columnas auto-ajustadas."""
    wb = Workbook()
    wb.remove(wb.active)
    headers = ["method", "alpha", "m", "archs", "local_epochs", "rounds",
               "mean_acc", "std_acc", "client_acc_mean", "repeats", "runtime_s"]

    for dataset, sub in frame.groupby("dataset", sort=True):
        ws = wb.create_sheet(title=str(dataset)[:31])
        ws.append(headers)

        # Estilo encabezados
        for col_idx in range(1, len(headers) + 1):
            cell = ws.cell(row=1, column=col_idx)
            cell.font = Font(bold=True)
            cell.alignment = Alignment(horizontal="center", vertical="center")

        for _, fila in sub.sort_values(["method", "alpha"]).iterrows():
            ws.append([None if pd.isna(fila[h]) else fila[h] for h in headers])

        for col in range(1, len(headers) + 1):
            col_letter = get_column_letter(col)
            max_len = 10
            for cell in ws[col_letter]:
                max_len = max(max_len, len("" if cell.value is None else str(cell.value)))
            ws.column_dimensions[col_letter].width = min(max_len + 2, 45)

    return wb


def plot_curves(fila, ruta: Path) -> Path:
    """Una línea por semilla: accuracy de test vs época global, un punto por evaluación."""
    c = fila.coordinates
    plt.figure(figsize=(6, 4))
    for seed, puntos in sorted(fila.curves.items(), key=lambda kv: int(kv[0])):
        if not puntos:
            continue
        xs, ys = zip(*sorted(puntos))
        plt.plot(xs, ys, marker="o", label=f"seed {seed}")
    plt.xlabel("Epoch")
    plt.ylabel("Test Accuracy")
    plt.title(f"{c['dataset']} {c['method']} α={c['alpha']} m={c['m']}")
    plt.legend()
    plt.tight_layout()
    ruta.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(ruta)
    plt.close()
    return ruta


def render_report(store: ResultsStore, out_dir) -> dict:
    """
    Escribe en `out_dir`:
      - table_<dataset>.csv / .txt   (métodos × α)
      - report.xlsx
      - curves/<key>.png             (solo filas con curva)
    Devuelve las rutas generadas.
    """
    logger = get_logger()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    frame = results_frame(store)
    salida = {"tables": {}, "texts": {}, "curves": [], "xlsx": None}

    for dataset, tabla in dataset_tables(frame).items():
        csv_path = out_dir / f"table_{dataset}.csv"
        tabla.to_csv(csv_path)
        txt_path = out_dir / f"table_{dataset}.txt"
        txt_path.write_text(_texto(tabla, frame[frame["dataset"] == dataset]) + "\n", encoding="utf-8")
        salida["tables"][dataset] = csv_path
        salida["texts"][dataset] = txt_path

    xlsx_path = out_dir / "report.xlsx"
    build_workbook(frame).save(xlsx_path)
    salida["xlsx"] = xlsx_path

    for fila in _filas_ok(store):
        if any(fila.curves.values()):
            salida["curves"].append(plot_curves(fila, out_dir / "curves" / f"{fila.key[:16]}.png"))

    logger.info(
        f"📊 Reporte en {out_dir}: {len(salida['tables'])} tablas, {len(salida['curves'])} curvas"
    )
    return salida
