# data/__init__.py
"""
Ingesta de datasets y partición no-iid entre clientes.

- datasets.py   → DatasetHandle, load_dataset, register_dataset
- partition.py  → PartitionPlan, dirichlet_partition, partition_summary
"""
