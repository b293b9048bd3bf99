"""File formats: data CSV, model JSON, draws CSV and result files.

Every CSV written here starts with a ``#`` comment line carrying the tool
version and seed; JSON outputs carry the same information under ``_meta``.
Reals are written with 17 significant digits so float64 values round-trip.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .families import FAMILIES
from .model import Dataset, DrawSet, Gamm, ModelSpec, PriorConfig, SmoothTerm

__all__ = [
    "SchemaError",
    "header_line",
    "read_csv",
    "write_csv",
    "load_dataset",
    "load_model_spec",
    "model_spec_to_dict",
    "dump_model_spec",
    "write_draws",
    "read_draws",
    "write_json",
]

SCHEMA_VERSION = 1
TOOL = "gamm_r2"


class SchemaError(ValueError):
    """Malformed input file; the message names the location."""


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return ""
    return format(x, ".17g")


def header_line(seed=None) -> str:
    return f"# {TOOL} {__version__} seed={'none' if seed is None else seed}"


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], seed=None) -> None:
    buf = io.StringIO()
    buf.write(header_line(seed) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]], list[int]]:
    """Header, rows and 1-based file line numbers; ``#`` lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    lines = path.read_text().splitlines()
    header = None
    rows, linenos = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = [h.strip() for h in fields]
            continue
        if len(fields) != len(header):
            raise SchemaError(
                f"{path}:{lineno}: expected {len(header)} fields, found {len(fields)}"
            )
        rows.append(fields)
        linenos.append(lineno)
    if header is None:
        raise SchemaError(f"{path}: missing header row")
    return header, rows, linenos


def _parse_float(value: str, path, lineno: int, col: int, name: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise SchemaError(
            f"{path}:{lineno}:{col + 1}: column {name!r}: cannot parse {value!r} as a number"
        ) from None


def load_dataset(path, spec: ModelSpec) -> Dataset:
    header, rows, linenos = read_csv(path)
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}:1: duplicate column names")
    numeric = [spec.response, *spec.fixed, *(s.var for s in spec.smooth)]
    columns = {}
    for name in numeric + list(spec.random):
        if name not in header:
            raise SchemaError(f"{path}: column {name!r} required by the model is missing")
    for name in header:
        j = header.index(name)
        if name in numeric:
            columns[name] = np.array(
                [_parse_float(r[j], path, ln, j, name) for r, ln in zip(rows, linenos)]
            )
        elif name in spec.random:
            raw = [r[j].strip() for r in rows]
            try:
                columns[name] = np.array([int(v) for v in raw])
            except ValueError:
                columns[name] = np.array(raw)
    return Dataset.from_columns(columns, spec)


def _require(cond, msg):
    if not cond:
        raise SchemaError(msg)


def model_spec_from_dict(d: dict, where: str = "model") -> ModelSpec:
    _require(isinstance(d, dict), f"{where}: top level must be a JSON object")
    version = d.get("schema_version", SCHEMA_VERSION)
    _require(version == SCHEMA_VERSION, f"{where}: unsupported schema_version {version!r}")
    known = {"schema_version", "family", "response", "fixed", "random", "smooth", "priors"}
    extra = set(d) - known
    _require(not extra, f"{where}: unknown keys {sorted(extra)}")
    _require("family" in d, f"{where}: missing key 'family'")
    fam = d["family"]
    _require(fam in FAMILIES, f"{where}.family: unknown family {fam!r}; expected one of {sorted(FAMILIES)}")
    for key in ("fixed", "random"):
        v = d.get(key, [])
        _require(isinstance(v, list) and all(isinstance(s, str) for s in v),
                 f"{where}.{key}: must be a list of column names")
    smooth = []
    for i, s in enumerate(d.get("smooth", [])):
        loc = f"{where}.smooth[{i}]"
        if isinstance(s, str):
            s = {"var": s}
        _require(isinstance(s, dict) and "var" in s, f"{loc}: needs a 'var' entry")
        bad = set(s) - {"var", "k", "degree", "penalty_order"}
        _require(not bad, f"{loc}: unknown keys {sorted(bad)}")
        for key in ("k", "degree", "penalty_order"):
            _require(key not in s or (isinstance(s[key], int) and s[key] >= 0),
                     f"{loc}.{key}: must be a nonnegative integer")
        smooth.append(SmoothTerm(**s))
    priors = d.get("priors", {})
    _require(isinstance(priors, dict), f"{where}.priors: must be an object")
    try:
        pc = PriorConfig(**priors)
    except TypeError as e:
        raise SchemaError(f"{where}.priors: {e}") from None
    except ValueError as e:
        raise SchemaError(f"{where}.priors: {e}") from None
    try:
        return ModelSpec(fam, tuple(d.get("fixed", [])), tuple(d.get("random", [])),
                         tuple(smooth), pc, d.get("response", "y"))
    except ValueError as e:
        raise SchemaError(f"{where}: {e}") from None


def load_model_spec(path) -> ModelSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
    return model_spec_from_dict(d, str(path))


def model_spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "family": spec.family.name,
        "response": spec.response,
        "fixed": list(spec.fixed),
        "random": list(spec.random),
        "smooth": [s.to_dict() for s in spec.smooth],
        "priors": spec.priors.to_dict(),
    }


def dump_model_spec(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(model_spec_to_dict(spec), indent=2) + "\n")


def draws_matrix(model: Gamm, draws: DrawSet) -> np.ndarray:
    parts = [draws.beta, draws.b, draws.gamma, draws.psi, draws.tau]
    if model.family.has_dispersion:
        parts.append(draws.phi[:, None])
    return np.hstack(parts)


def write_draws(path, model: Gamm, draws: DrawSet) -> None:
    names = model.draw_names()
    mat = draws_matrix(model, draws)
    if mat.shape[1] != len(names):
        raise ValueError("draws do not match the model dimensions")
    rows = (
        [int(c), int(i), *row]
        for c, i, row in zip(draws.chain, draws.iteration, mat)
    )
    write_csv(path, ["chain", "iter", *names], rows, seed=draws.seed)


def read_draws(path, model: Gamm) -> DrawSet:
    """Read a draws CSV, checking its columns against the model."""
    header, rows, linenos = read_csv(path)
    expected = ["chain", "iter", *model.draw_names()]
    if header != expected:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        raise SchemaError(
            f"{path}:header: draws columns do not match the model "
            f"(missing {missing}, unexpected {extra})"
        )
    if not rows:
        raise SchemaError(f"{path}: no draws")
    vals = np.array([
        [_parse_float(v, path, ln, j, header[j]) for j, v in enumerate(r)]
        for r, ln in zip(rows, linenos)
    ])
    seed = None
    first = Path(path).read_text().split("\n", 1)[0]
    if first.startswith("#") and "seed=" in first:
        s = first.split("seed=", 1)[1].strip()
        seed = int(s) if s.lstrip("-").isdigit() else None
    col = 2
    parts = {}
    for name, size in (("beta", model.n_beta), ("b", model.n_b), ("gamma", model.n_gamma),
                       ("psi", len(model.spec.random)), ("tau", len(model.spec.smooth))):
        parts[name] = vals[:, col: col + size]
        col += size
    phi = vals[:, col] if model.family.has_dispersion else None
    for name in ("psi", "tau"):
        bad = np.argwhere(~(parts[name] > 0))
        if bad.size:
            r = int(bad[0, 0])
            raise SchemaError(f"{path}:{linenos[r]}: {name} must be positive")
    if phi is not None and np.any(~(phi > 0)):
        r = int(np.flatnonzero(~(phi > 0))[0])
        raise SchemaError(f"{path}:{linenos[r]}: phi must be positive")
    return DrawSet(parts["beta"], parts["b"], parts["gamma"], phi, parts["psi"], parts["tau"],
                   chain=vals[:, 0].astype(int), iteration=vals[:, 1].astype(int), seed=seed)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if np.isnan(x) else x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, payload: dict, seed=None) -> None:
    out = {"_meta": {"tool": TOOL, "version": __version__, "seed": seed}}
    out.update(_jsonable(payload))
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=False) + "\n")
