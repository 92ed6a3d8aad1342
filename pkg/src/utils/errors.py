"""Gerarchia di eccezioni del progetto e mapping verso gli exit code della CLI."""

import json
from typing import Dict, Any


class NHDPError(Exception):
    """
    Eccezione base del progetto.

    Ogni sottoclasse dichiara l'exit code che la CLI restituisce quando
    l'errore risale fino all'entry point.
    """

    exit_code = 1

    def to_dict(self) -> Dict[str, Any]:
        """
        Converte l'errore in un dizionario serializzabile (errore machine-readable).

        Returns:
            Dict con nome della classe, messaggio ed exit code
        """
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


class ConfigError(NHDPError):
    """Configurazione non valida: chiave sconosciuta, valore non parsabile, path mancante."""

    exit_code = 2


class ParameterError(NHDPError, ValueError):
    """Parametro numerico fuori dal dominio ammesso (es. concentrazione non positiva)."""

    exit_code = 2


class DataError(NHDPError):
    """File di input illeggibile o con contenuto non valido."""

    exit_code = 3


class UnsupportedOperationError(NHDPError):
    """Operazione non supportata dai dati disponibili (es. stream-id assenti)."""

    exit_code = 3


class NumericalError(NHDPError):
    """Fallimento numerico: Cholesky non riuscita, pesi tutti nulli, condizionamento singolare."""

    exit_code = 4


class CorruptionError(NHDPError):
    """Stato della catena incoerente: indici fuori range o contatori non allineati."""

    exit_code = 4
