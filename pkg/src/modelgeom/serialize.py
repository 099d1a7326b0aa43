"""Byte-stable text output: JSON with 17 significant digits, tables with 6, CSV."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _float17(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _dump(obj, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        out.append(_float17(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(k)}: ")
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            out.append("[" + ", ".join(_float17(v) if isinstance(v, float) else str(v) for v in obj) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float at 17 significant digits (round-trip exact);
    non-finite floats become null."""
    out: list[str] = []
    _dump(_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def flatten(obj, prefix: str = "") -> dict:
    """Nested dict -> {"a.b.c": leaf}; lists of scalars are joined with ';'."""
    flat: dict = {}
    obj = _plain(obj)
    if isinstance(obj, dict):
        for k, v in obj.items():
            key = f"{prefix}.{k}" if prefix else str(k)
            if isinstance(v, dict):
                flat.update(flatten(v, key))
            elif isinstance(v, list) and v and isinstance(v[0], dict):
                for i, item in enumerate(v):
                    flat.update(flatten(item, f"{key}.{i}"))
            else:
                flat[key] = v
    else:
        flat[prefix or "value"] = obj
    return flat


def _cell(v, digits: int) -> str:
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, float):
        return format(v, f".{digits}g") if math.isfinite(v) else str(v)
    if isinstance(v, list):
        return ";".join(_cell(x, digits) for x in v)
    return str(v)


def table(obj) -> str:
    flat = flatten(obj)
    if not flat:
        return ""
    width = max(len(k) for k in flat)
    return "".join(f"{k.ljust(width)}  {_cell(v, 6)}\n" for k, v in flat.items())


def csv_text(rows: list[dict]) -> str:
    """Rows of flat records sharing a header (17 significant digits)."""
    buf = io.StringIO()
    flat = [flatten(r) for r in rows]
    header: list[str] = []
    for r in flat:
        for k in r:
            if k not in header:
                header.append(k)
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in flat:
        wr.writerow([_cell(r.get(k), 17) for k in header])
    return buf.getvalue()


def load_schema(name: str) -> dict:
    """Shipped JSON schema ``name`` (classify, exit_time, simulate, explosion,
    one_end, two_end, minimal)."""
    from importlib.resources import files
    return json.loads(files("modelgeom").joinpath("schemas", f"{name}.schema.json").read_text("utf-8"))
