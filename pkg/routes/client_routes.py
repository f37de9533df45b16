import json
from dataclasses import replace

import click
from flask import Blueprint, current_app

from config import Config, load_run_config
from data.datasets import load_dataset
from data.partition import PartitionPlan
from errors import FedSynError
from federated.ensemble import EnsembleBundle, evaluate, fedavg_aggregate
from federated.local_training import train_all_clients
from models.checkpoint import load_checkpoint, save_checkpoint

client_bp = Blueprint("client_bp", __name__, cli_group=None)


def parse_archs(texto: str, m: int) -> list:
    """'cnn1' se repite m veces; 'resnet18,cnn1,...' debe traer exactamente m."""
    archs = [a.strip() for a in texto.split(",") if a.strip()]
    if len(archs) == 1:
        return archs * m
    if len(archs) != m:
        raise click.BadParameter(f"Se esperaban 1 o {m} arquitecturas, llegaron {len(archs)}")
    return archs


# -----------------------------------------------------------
# Entrenamiento local de todos los clientes
# -----------------------------------------------------------
@client_bp.cli.command("train-clients")
@click.option("--plan", "plan_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dataset", "dataset_name", required=True)
@click.option("--archs", required=True, help="Una arquitectura o lista separada por comas (largo m)")
@click.option("--epochs", type=int, default=None, help="Épocas locales E (pisa la config)")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--preset", default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def train_clients(plan_path, dataset_name, archs, epochs, config_path, preset, workers, out):
    try:
        fedsyn_cfg, local_cfg = load_run_config(config_path, preset=preset)
        if epochs is not None:
            local_cfg = replace(local_cfg, epochs=epochs)

        plan = PartitionPlan.load(plan_path)
        data = load_dataset(dataset_name, "train")
        bundle = train_all_clients(
            plan, data, parse_archs(archs, plan.num_clients), local_cfg,
            width=fedsyn_cfg.width, workers=workers or Config.WORKERS,
        )
        bundle.save(out)
        click.echo(json.dumps({"out": out, "archs": bundle.archs, "sizes": list(bundle.sizes)}))

    except FedSynError as e:
        current_app.logger.exception(f"Error entrenando clientes: {e}")
        raise click.ClickException(str(e))


# -----------------------------------------------------------
# Baseline FedAvg
# -----------------------------------------------------------
@client_bp.cli.command("fedavg")
@click.option("--bundle", "bundle_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def fedavg(bundle_dir, out):
    try:
        bundle = EnsembleBundle.load(bundle_dir)
        global_model = fedavg_aggregate(bundle)
        ruta = save_checkpoint(global_model, out, dataset=bundle.dataset)
        click.echo(json.dumps({"out": str(ruta), "clients": bundle.m, "weights": bundle.weights()}))

    except FedSynError as e:
        current_app.logger.exception(f"Error en FedAvg: {e}")
        raise click.ClickException(str(e))


# -----------------------------------------------------------
# Evaluar un checkpoint
# -----------------------------------------------------------
@client_bp.cli.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dataset", "dataset_name", required=True)
@click.option("--split", type=click.Choice(["train", "test"]), default="test", show_default=True)
def eval_model(model_path, dataset_name, split):
    try:
        model, manifest = load_checkpoint(model_path)
        data = load_dataset(dataset_name, split)
        acc = evaluate(model, data)
        click.echo(json.dumps({
            "model": model_path,
            "arch_id": manifest["arch_id"],
            "dataset": data.name,
            "split": split,
            "n": len(data),
            "accuracy": acc,
        }))

    except FedSynError as e:
        current_app.logger.exception(f"Error evaluando {model_path}: {e}")
        raise click.ClickException(str(e))
