"""JSON serialization with explicit 17-significant-digit floats.

float64 values are written with 17 significant digits, which is enough to
reconstruct the exact bit pattern on load (including signed zero), so
save/load round-trips are 0-ULP.
"""

import json

import numpy as np


def format_float(v):
    """Render one finite float as a JSON number with 17 significant digits."""
    v = float(v)
    if not np.isfinite(v):
        raise ValueError(f"non-finite value {v!r} cannot be serialized")
    if v == 0.0:
        return "-0.0" if np.signbit(v) else "0.0"
    s = format(v, ".17g")
    # keep the token unambiguously a float so json.loads gives float back
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def _render(obj, indent, level):
    pad = " " * (indent * level)
    inner = " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for key, val in obj.items():
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            items.append(f"{inner}{json.dumps(key)}: {_render(val, indent, level + 1)}")
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = np.asarray(obj).tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        items = [f"{inner}{_render(v, indent, level + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """Serialize to a JSON string; every float carries 17 significant digits."""
    return _render(obj, indent, 0) + "\n"


def dump(obj, path, indent=2):
    with open(path, "w") as fh:
        fh.write(dumps(obj, indent=indent))


def load(path):
    with open(path) as fh:
        return json.load(fh)
