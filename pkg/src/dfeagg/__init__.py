"""Privacy-preserving federated aggregation with decentralized functional encryption."""

from .errors import DFEError
from .groups import GroupParams, bls12_381_params, toy_params
from .quantizer import QuantScheme, quantize, dequantize_aggregate
from .scheme import (
    AggregationKey,
    CipherVector,
    ClientKey,
    MasterSecret,
    RoundUnmask,
    aggregate_decrypt,
    derive_round_unmask,
    encrypt,
    keygen_aggregator,
    keygen_client,
    setup,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationKey", "CipherVector", "ClientKey", "DFEError", "GroupParams", "MasterSecret",
    "QuantScheme", "RoundUnmask", "aggregate_decrypt", "bls12_381_params", "dequantize_aggregate",
    "derive_round_unmask", "encrypt", "keygen_aggregator", "keygen_client", "quantize", "setup",
    "toy_params",
]
