# harness/__init__.py
"""
Matriz de experimentos.

- spec.py   → ExperimentSpec, celdas y claves
- store.py  → ResultsStore (JSONL con lock)
- matrix.py → run_matrix
- report.py → render_report (CSV, texto, xlsx, curvas)
"""
