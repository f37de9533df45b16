# federated/__init__.py
"""
Lado cliente y vista del servidor.

- local_training.py → LocalTrainConfig, local_update, train_all_clients
- ensemble.py       → EnsembleBundle, average_logits, fedavg_aggregate, evaluate
"""
