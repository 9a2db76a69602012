"""Bit-stable text output: every float is written with 17 significant digits."""

from __future__ import annotations

import json
import math
from typing import Any, Iterable, Sequence, TextIO


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def _json(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        # JSON has no infinities; keep them readable as strings
        return fmt(obj) if math.isfinite(obj) else json.dumps(fmt(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _json(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):  # numpy scalars
        return _json(obj.item(), indent, level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with floats as ``%.17g``; dict order is kept."""
    return _json(obj, indent, 0) + "\n"


def write_csv(out: TextIO, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    out.write(",".join(header) + "\n")
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append(fmt(v))
            elif v is None:
                cells.append("")
            else:
                cells.append(str(v))
        out.write(",".join(cells) + "\n")
