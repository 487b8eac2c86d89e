"""JSON codecs for operators and state vectors.

Complex matrices travel as {"dim": d, "re": [[...]], "im": [[...]]}.
Python's json module prints floats with shortest round-trip repr, so the
encoding is bit-faithful for finite doubles.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .linalg import as_matrix


def operator_to_json(a) -> dict:
    m = as_matrix(a)
    return {
        "dim": int(m.shape[0]),
        "re": m.real.tolist(),
        "im": m.imag.tolist(),
    }


def operator_from_json(obj: dict) -> np.ndarray:
    try:
        dim = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=np.float64)
        im = np.asarray(obj["im"], dtype=np.float64)
    except (KeyError, TypeError) as exc:
        raise DimensionMismatch(f"malformed operator object: {exc}") from exc
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise DimensionMismatch(
            f"operator entries have shape {re.shape}/{im.shape}, expected ({dim}, {dim})"
        )
    return re + 1j * im


def vector_to_json(v) -> dict:
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    return {
        "dim": int(v.shape[0]),
        "re": v.real.tolist(),
        "im": v.imag.tolist(),
    }


def vector_from_json(obj: dict) -> np.ndarray:
    dim = int(obj["dim"])
    re = np.asarray(obj["re"], dtype=np.float64)
    im = np.asarray(obj["im"], dtype=np.float64)
    if re.shape != (dim,) or im.shape != (dim,):
        raise DimensionMismatch("vector entries do not match declared dim")
    return re + 1j * im
