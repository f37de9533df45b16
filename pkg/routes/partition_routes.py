import json

import click
from flask import Blueprint, current_app

from data.datasets import load_dataset
from data.partition import dirichlet_partition, max_class_share, partition_summary
from errors import FedSynError

partition_bp = Blueprint("partition_bp", __name__, cli_group=None)


# -----------------------------------------------------------
# Particionar un dataset entre m clientes (Dirichlet por clase)
# -----------------------------------------------------------
@partition_bp.cli.command("partition")
@click.option("--dataset", "dataset_name", required=True, help="MNIST, FashionMNIST, CIFAR10, ...")
@click.option("--alpha", type=float, required=True, help="Concentración de la Dirichlet")
@click.option("--clients", type=int, required=True, help="Cantidad de clientes m")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def partition(dataset_name, alpha, clients, seed, out):
    try:
        data = load_dataset(dataset_name, "train")
        plan = dirichlet_partition(data, alpha, clients, seed)
        plan.save(out)

        cuota = max_class_share(plan, data)
        resumen = partition_summary(plan, data)
        click.echo(json.dumps({
            "out": out,
            "client_sizes": list(plan.client_sizes),
            "max_class_share": [round(float(c), 4) for c in cuota],
            "class_counts": resumen.tolist(),
        }))
        current_app.logger.info(f"✅ Plan guardado en {out} (α={alpha}, m={clients}, seed={seed})")

    except FedSynError as e:
        current_app.logger.exception(f"Error al particionar {dataset_name}: {e}")
        raise click.ClickException(str(e))
