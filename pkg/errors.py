# errors.py
"""
Excepciones del laboratorio.

Todas heredan de FedSynError y además del builtin equivalente, así quien
llama puede atrapar `ValueError` o la clase específica.
"""


class FedSynError(Exception):
    pass


class ConfigError(FedSynError, ValueError):
    pass


class DatasetError(FedSynError, ValueError):
    pass


class PartitionError(FedSynError, ValueError):
    pass


class ShapeMismatchError(FedSynError, ValueError):
    pass


class UnknownArchitectureError(FedSynError, KeyError):
    def __str__(self):
        # KeyError envuelve el mensaje entre comillas
        return str(self.args[0]) if self.args else ""


class CheckpointError(FedSynError, RuntimeError):
    pass


class LocalTrainingError(FedSynError, RuntimeError):
    pass


class UnsupportedOperationError(FedSynError, NotImplementedError):
    pass


class BNCaptureMismatchError(FedSynError, ValueError):
    pass


class NonFiniteError(FedSynError, FloatingPointError):
    pass


class GeneratorDivergedError(NonFiniteError):
    pass


class StoreError(FedSynError, RuntimeError):
    pass
