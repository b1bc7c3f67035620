"""Per-stage RNG seeds derived from one base seed."""

import hashlib


def derive_seed(seed: int, *names: object) -> int:
    """Stable 63-bit seed from ``seed`` and a path of stage names."""
    key = ":".join([str(int(seed)), *(str(n) for n in names)])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big") >> 1
