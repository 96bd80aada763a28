"""CSV/JSON emission and run manifests.

Reals are written with 17 significant digits so every double round-trips;
formatting never consults the locale.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import ParseError


def format_real(v) -> str:
    return format(float(v), ".17g")


def write_csv(path, header: Iterable[str], rows, int_cols: Iterable[int] = ()) -> None:
    """Write ``rows`` under ``header``; columns in ``int_cols`` are written as integers."""
    int_cols = set(int_cols)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for j, v in enumerate(row):
            if j in int_cols or isinstance(v, (bool, np.bool_)):
                cells.append(str(int(v)))
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(format_real(v))
        lines.append(",".join(cells))
    # newline="\n" keeps bytes identical across platforms
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list, np.ndarray]:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def parse_json(text: str, source: str = "<string>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return parse_json(text, str(path))


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_to_builtin) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_json(obj))


def _to_builtin(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def config_hash(obj) -> str:
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_to_builtin)
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    arguments: dict
    seed: Optional[int]
    generator: str
    params: Optional[dict]
    version: str
    duration_s: float = 0.0
    outputs: list = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return config_hash({"command": self.command, "arguments": self.arguments})

    def to_dict(self) -> dict:
        out = asdict(self)
        out["config_hash"] = self.config_hash
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "RunManifest":
        keys = ("command", "arguments", "seed", "generator", "params", "version",
                "duration_s", "outputs")
        missing = [k for k in keys[:6] if k not in obj]
        if missing:
            raise ParseError(f"manifest lacks {', '.join(missing)}")
        return cls(**{k: obj[k] for k in keys if k in obj})

    def write_next_to(self, output: str, out_dir) -> str:
        name = f"{os.path.splitext(output)[0]}.manifest.json"
        write_json(Path(out_dir) / name, self.to_dict())
        return name
