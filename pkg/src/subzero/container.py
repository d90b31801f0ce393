"""Named-array container I/O.

All artifacts (k-space, sensitivities, masks, bases, checkpoints) round-trip
through a single NPZ-based format. Complex arrays are stored as float32 with
an interleaved trailing real/imag axis of size 2; which keys are complex is
recorded in a reserved JSON metadata entry so loading is unambiguous.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DomainError

META_KEY = "__meta__"


def save_arrays(path, arrays: dict) -> None:
    """Write a mapping of named arrays to ``path`` (.npz).

    Complex inputs are split into interleaved float32 real/imag pairs along a
    new trailing axis. Boolean arrays are stored as uint8. Everything else is
    stored as-is.
    """
    payload = {}
    complex_keys = []
    bool_keys = []
    for key, value in arrays.items():
        if key == META_KEY:
            raise DomainError(f"'{META_KEY}' is a reserved key")
        arr = np.asarray(value)
        if np.iscomplexobj(arr):
            payload[key] = np.stack(
                [arr.real.astype(np.float32), arr.imag.astype(np.float32)], axis=-1
            )
            complex_keys.append(key)
        elif arr.dtype == bool:
            payload[key] = arr.astype(np.uint8)
            bool_keys.append(key)
        else:
            payload[key] = arr
    meta = json.dumps({"complex": complex_keys, "bool": bool_keys})
    payload[META_KEY] = np.array(meta)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **payload)


def load_arrays(path) -> dict:
    """Load a container written by :func:`save_arrays`, restoring dtypes."""
    with np.load(path, allow_pickle=False) as npz:
        raw = {key: npz[key] for key in npz.files}
    if META_KEY not in raw:
        raise DomainError(f"{path} is not a subzero container (missing metadata)")
    meta = json.loads(str(raw.pop(META_KEY)))
    out = {}
    for key, arr in raw.items():
        if key in meta["complex"]:
            out[key] = (arr[..., 0] + 1j * arr[..., 1]).astype(np.complex64)
        elif key in meta["bool"]:
            out[key] = arr.astype(bool)
        else:
            out[key] = arr
    return out
