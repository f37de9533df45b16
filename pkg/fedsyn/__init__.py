# fedsyn/__init__.py
"""
Servidor de FedSyn en dos etapas.

- generator_stage.py → muestreo (z, y), ℓ_CE, ℓ_BN, ℓ_div, ℓ_gen, bucle del generador
- distillation.py    → ℓ_dis, época de FedSyn, run_fedsyn, run_multiround
"""
