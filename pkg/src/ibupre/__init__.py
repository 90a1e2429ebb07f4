"""Identity-based unidirectional proxy re-encryption on lattice gadget trapdoors.

Research code: the samplers are not constant time and the random source is
not a vetted CSPRNG construction. Do not protect real data with it.
"""

from .sampler import Rng
from .scheme import (
    Ciphertext,
    DecryptionError,
    Params,
    PublicParams,
    ReKey,
    UserSecretKey,
    decrypt,
    encrypt,
    extract,
    params_new,
    preset,
    reencrypt,
    rekeygen,
    setup,
)

__version__ = "0.1.0"

__all__ = [
    "Ciphertext",
    "DecryptionError",
    "Params",
    "PublicParams",
    "ReKey",
    "Rng",
    "UserSecretKey",
    "decrypt",
    "encrypt",
    "extract",
    "params_new",
    "preset",
    "reencrypt",
    "rekeygen",
    "setup",
]
