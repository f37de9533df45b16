import json
from datetime import datetime
from io import BytesIO
from pathlib import Path

import click
import pytz
from flask import Blueprint, abort, current_app, jsonify, render_template, send_file

from config import Config
from errors import FedSynError, StoreError
from harness.matrix import run_matrix
from harness.report import build_workbook, dataset_tables, render_report, results_frame
from harness.spec import load_spec
from harness.store import ResultsStore

harness_bp = Blueprint("harness_bp", __name__, cli_group=None)


def _store() -> ResultsStore:
    return ResultsStore(current_app.config["RESULTS_STORE"])


# -----------------------------------------------------------
# CLI: matriz de experimentos
# -----------------------------------------------------------
@harness_bp.cli.command("matrix")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--store", "store_path", type=click.Path(dir_okay=False), required=True)
@click.option("--force", is_flag=True, help="Re-ejecuta celdas ya presentes (agrega filas nuevas)")
@click.option("--runs-dir", type=click.Path(file_okay=False), default=None,
              help="Guarda métricas y checkpoints de cada corrida de FedSyn")
@click.option("--workers", type=int, default=None)
def matrix(spec_path, store_path, force, runs_dir, workers):
    try:
        spec = load_spec(spec_path)
        nuevas = run_matrix(
            spec, ResultsStore(store_path), force=force,
            runs_dir=runs_dir, workers=workers or Config.WORKERS,
        )
        fallidas = [f for f in nuevas if not f.ok]
        click.echo(json.dumps({
            "store": store_path,
            "cells": len(spec.cells()),
            "new_rows": len(nuevas),
            "failed": [f.coordinates for f in fallidas],
        }))

    except FedSynError as e:
        current_app.logger.exception(f"Error en la matriz {spec_path}: {e}")
        raise click.ClickException(str(e))


# -----------------------------------------------------------
# CLI: reporte (tablas, xlsx y curvas)
# -----------------------------------------------------------
@harness_bp.cli.command("report")
@click.option("--store", "store_path", type=click.Path(dir_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def report(store_path, out):
    try:
        salida = render_report(ResultsStore(store_path), out)
        for dataset, ruta in salida["texts"].items():
            click.echo(f"== {dataset} ==")
            click.echo(Path(ruta).read_text(encoding="utf-8"))
        click.echo(f"📁 {out}: {len(salida['tables'])} tablas, {len(salida['curves'])} curvas, report.xlsx")

    except FedSynError as e:
        current_app.logger.exception(f"Error generando el reporte: {e}")
        raise click.ClickException(str(e))


# -----------------------------------------------------------
# Dashboard de resultados (solo lectura)
# -----------------------------------------------------------
@harness_bp.route("/report", methods=["GET"])
def ver_reporte():
    try:
        frame = results_frame(_store())
        tablas = {
            dataset: tabla.to_html(classes="tabla", float_format=lambda v: f"{100 * v:.2f}")
            for dataset, tabla in dataset_tables(frame).items()
        }
        filas = frame.sort_values(["dataset", "method", "alpha"]).to_dict(orient="records")
        return render_template("report.html", tablas=tablas, filas=filas)
    except StoreError as e:
        current_app.logger.warning(f"Reporte sin datos: {e}")
        return render_template("report.html", tablas={}, filas=[], aviso=str(e))


@harness_bp.route("/report/export", methods=["GET"])
def exportar_reporte():
    try:
        wb = build_workbook(results_frame(_store()))
    except StoreError as e:
        current_app.logger.warning(f"Exportación sin datos: {e}")
        return jsonify({"error": str(e)}), 404

    # Guardar en memoria
    output = BytesIO()
    wb.save(output)
    output.seek(0)

    ahora = datetime.now(pytz.timezone(current_app.config["TZ"]))
    return send_file(
        output,
        as_attachment=True,
        download_name=f"fedsyn_{ahora.strftime('%Y-%m-%d_%H%M')}.xlsx",
        mimetype="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
    )


@harness_bp.route("/report/curves/<key>", methods=["GET"])
def curvas(key):
    try:
        ultimas = _store().latest()
    except StoreError as e:
        current_app.logger.exception(f"Store ilegible: {e}")
        return jsonify({"error": str(e)}), 500

    # se acepta la clave completa o un prefijo único
    candidatas = [f for k, f in ultimas.items() if k.startswith(key)]
    if len(candidatas) != 1:
        abort(404)
    fila = candidatas[0]
    return jsonify({"key": fila.key, "coordinates": fila.coordinates, "curves": fila.curves})
