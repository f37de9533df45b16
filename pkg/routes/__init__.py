# routes/__init__.py
"""
Paquete de rutas (Blueprints) del laboratorio FedSyn.

Cada archivo registra comandos de CLI (flask/click) y, si corresponde, rutas web:
- partition_routes.py → partition
- client_routes.py    → train-clients, fedavg, eval
- distill_routes.py   → distill, run
- harness_routes.py   → matrix, report y el dashboard /report

No se requiere lógica adicional en este archivo.
"""
