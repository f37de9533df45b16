import json
from pathlib import Path

import click
from flask import Blueprint, current_app

from config import Config, load_run_config
from data.datasets import load_dataset
from data.partition import dirichlet_partition
from errors import FedSynError
from federated.ensemble import EnsembleBundle
from fedsyn.distillation import run_fedsyn, run_multiround
from routes.client_routes import parse_archs

distill_bp = Blueprint("distill_bp", __name__, cli_group=None)


def _resumen(resultado, out_dir) -> str:
    return json.dumps({
        "out": str(out_dir) if out_dir else None,
        "final_accuracy": resultado.final_accuracy,
        "client_accuracies": resultado.client_accuracies,
        "epochs": len(resultado.trace),
        "stage_seconds": resultado.stage_seconds,
    })


# -----------------------------------------------------------
# FedSyn sobre un bundle ya entrenado
# -----------------------------------------------------------
@distill_bp.cli.command("distill")
@click.option("--bundle", "bundle_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--student", "student_arch", required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--preset", default=None)
@click.option("--seed", type=int, default=None, help="Pisa la semilla de la config")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--eval/--no-eval", "con_eval", default=True, help="Evaluar sobre el test del dataset del bundle")
def distill(bundle_dir, student_arch, config_path, preset, seed, out, con_eval):
    try:
        overrides = {"seed": seed} if seed is not None else None
        cfg, _ = load_run_config(config_path, preset=preset, overrides=overrides)
        bundle = EnsembleBundle.load(bundle_dir)
        test = load_dataset(bundle.dataset, "test") if con_eval and bundle.dataset else None

        resultado = run_fedsyn(bundle, student_arch, cfg, test=test, out_dir=out)
        click.echo(_resumen(resultado, out))

    except FedSynError as e:
        current_app.logger.exception(f"Error en la destilación: {e}")
        raise click.ClickException(str(e))


# -----------------------------------------------------------
# Corrida completa: partición → clientes → FedSyn (T_c rondas)
# -----------------------------------------------------------
@distill_bp.cli.command("run")
@click.option("--dataset", "dataset_name", required=True)
@click.option("--alpha", type=float, required=True)
@click.option("--clients", type=int, required=True)
@click.option("--archs", required=True)
@click.option("--student", "student_arch", default=None, help="Por defecto la arquitectura del cliente 0")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--preset", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def run(dataset_name, alpha, clients, archs, student_arch, config_path, preset, seed, workers, out):
    try:
        overrides = {"seed": seed} if seed is not None else None
        # la semilla local hereda la de FedSyn salvo que [local] la fije
        cfg, local_cfg = load_run_config(config_path, preset=preset, overrides=overrides)

        train = load_dataset(dataset_name, "train")
        test = load_dataset(dataset_name, "test")
        out_dir = Path(out) if out else Path(current_app.config["RESULTS_DIR"]) / f"{train.name}_a{alpha}_m{clients}_s{cfg.seed}"

        plan = dirichlet_partition(train, alpha, clients, cfg.seed)
        plan.save(out_dir / "plan.json")

        resultado = run_multiround(
            train, plan, parse_archs(archs, clients), cfg, local_cfg,
            test=test, student_arch=student_arch, out_dir=out_dir,
            workers=workers or Config.WORKERS,
        )
        click.echo(_resumen(resultado, out_dir))

    except FedSynError as e:
        current_app.logger.exception(f"Error en la corrida completa: {e}")
        raise click.ClickException(str(e))
