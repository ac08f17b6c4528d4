"""LWE bit encryption with key switching, and reversible data hiding in encrypted images."""

from .params import ParamProfile, ProfileError, paper_profile, toy_profile
from .lwe import Ciphertext, PublicKey, SecretKey, dec, enc
from .homomorphic import (EvalContext, KeySet, OpCounters, SwitchingKey, client_context,
                          generate_keys, hadd, hmul, key_switch, server_context)
from .circuits import EncryptedByte, add8, sub8

__all__ = [
    "ParamProfile", "ProfileError", "paper_profile", "toy_profile",
    "Ciphertext", "PublicKey", "SecretKey", "dec", "enc",
    "EvalContext", "KeySet", "OpCounters", "SwitchingKey", "client_context",
    "generate_keys", "hadd", "hmul", "key_switch", "server_context",
    "EncryptedByte", "add8", "sub8",
]
__version__ = "0.1.0"
