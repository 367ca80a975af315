import hashlib


def derive_seed(master: int, *labels) -> int:
    """Stable 64-bit seed for a labelled purpose, e.g. ``derive_seed(7, "fold", 3, "vae", "plain")``.

    Streams depend only on their own labels, so adding a generator or a fold
    never shifts the randomness seen by the others.
    """
    key = "/".join([str(int(master))] + [str(label) for label in labels])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")
