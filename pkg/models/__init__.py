# models/__init__.py

# Nota:
# Los módulos se importan explícitamente donde se usan (models.zoo,
# models.base, ...) para no cargar todas las arquitecturas al importar
# el paquete.
#
# - base.py        → ZooModel, BatchStatsCapture, forward_logits
# - cnn.py         → CNN1, CNN2
# - resnet.py      → ResNet18
# - wrn.py         → WRN-16-1, WRN-40-1
# - generator.py   → Generator, generate
# - zoo.py         → build_model, build_generator
# - checkpoint.py  → save_checkpoint, load_checkpoint
