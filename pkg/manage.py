"""
CLI del laboratorio:

    python manage.py partition --dataset MNIST --alpha 0.5 --clients 5 --seed 0 --out plan.json
    python manage.py run --dataset MNIST --alpha 0.5 --clients 5 --archs cnn1 --preset desk-mnist
    python manage.py matrix --spec spec.toml --store results.jsonl

Sin los comandos por defecto de Flask, así `run` es la corrida de FedSyn
y no el servidor de desarrollo (para el dashboard: `python app.py`).
"""
import logging

from flask.cli import FlaskGroup

from app import create_app

cli = FlaskGroup(create_app=create_app, add_default_commands=False)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    cli()
