"""Compatibility of quantum instruments and guessing-game monotones."""

from ._core import (
    DimensionError,
    Family,
    Instrument,
    ParseError,
    ProtocolError,
    System,
    check,
    family_distance,
    fixtures,
    free_threshold,
    hierarchy,
    load_family,
    score,
    trivial_resource,
    utility,
    witness_game,
    witness_to_game,
)

__all__ = [
    "DimensionError",
    "Family",
    "Instrument",
    "ParseError",
    "ProtocolError",
    "System",
    "check",
    "family_distance",
    "fixtures",
    "free_threshold",
    "hierarchy",
    "load_family",
    "score",
    "trivial_resource",
    "utility",
    "witness_game",
    "witness_to_game",
]
