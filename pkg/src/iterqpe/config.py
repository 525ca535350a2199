"""Run configuration: JSON documents validated against a schema.

Units: frequencies (couplings, eigenvalues, ``tau0``, noise rates) are in
inverse time, times in time units, phases in radians.

A sweep axis is written in place of a scalar as ``{"sweep": [v1, v2, ...]}``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .channel import RimSettings
from .errors import ConfigError, DomainError
from .model import (
    CpmgSequence,
    NoiseSpec,
    SpectralOperator,
    SpinStarParams,
    build_coherent_noise,
    build_spin_star,
    cpmg_effective_generator,
    omegas_for_gamma,
    single_qubit_lindblad,
    spectral_from_dense,
)
from .sampler import AdaptivePlan, InitialState, RepetitiveScheme

SWEEP_KEY = "sweep"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}


def _sweepable(schema: dict) -> dict:
    marker = {
        "type": "object",
        "properties": {SWEEP_KEY: {"type": "array", "minItems": 1, "items": schema}},
        "required": [SWEEP_KEY],
        "additionalProperties": False,
    }
    return {"oneOf": [schema, marker]}


_axes = {"type": "array", "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["spin_star", "dense", "cpmg"]},
        "couplings": {"type": "array", "items": _num, "minItems": 1},
        "axes": _axes,
        "shifted": {"type": "boolean"},
        "file": {"type": "string"},
        "matrix": {"type": "array", "items": {"type": "array", "items": _num}},
        "matrix_imag": {"type": "array", "items": {"type": "array", "items": _num}},
        "omega": _pos,
        "n_pulses": _count,
    },
    "additionalProperties": False,
}

SCHEME_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["repetitive", "adaptive"]},
        "m": _sweepable(_count),
        "t": _sweepable(_pos),
        "tau": _pos,
        "phi": _num,
        "tau0": _pos,
        "tau0_factor": _pos,
        "signed": {"type": "boolean"},
    },
    "additionalProperties": False,
}

NOISE_SCHEMA = {
    "type": "object",
    "properties": {
        "gamma": _sweepable({"type": "number", "minimum": 0}),
        "omegas": {"type": "array", "items": _num},
        "lindblad": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["z", "minus", "plus"]},
                    "rates": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "relative_rate": {"type": "number", "minimum": 0},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model", "scheme"],
    "properties": {
        "model": MODEL_SCHEMA,
        "scheme": {"oneOf": [SCHEME_SCHEMA, {"type": "array", "items": SCHEME_SCHEMA, "minItems": 1}]},
        "noise": NOISE_SCHEMA,
        "init": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["equal_superposition_of_eigenstates", "maximally_mixed", "eigenstate", "custom"]},
                "index": {"type": "integer", "minimum": 0},
                "file": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "sampling": {
            "type": "object",
            "properties": {
                "n_samples": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "repeats": _count,
            },
            "additionalProperties": False,
        },
        "analysis": {
            "type": "object",
            "properties": {
                "estimate": {"type": "boolean"},
                "n_peaks": _count,
                "refine": {"type": "boolean"},
                "spectrum": {"type": "boolean"},
                "s_hint": _count,
                "superop_file": {"type": "string"},
                "fit": {"type": "boolean"},
                "smooth_window": _count,
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string"},
                "name": {"type": "string"},
                "plots": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


# ----------------------------------------------------------- line tracking

def locate_lines(text: str) -> dict:
    """Map every JSON path (tuple of keys and indices) to its 1-based line."""
    lines: dict = {}
    decoder = json.JSONDecoder()

    def line_of(i):
        return text.count("\n", 0, i) + 1

    def skip(i):
        while i < len(text) and text[i] in " \t\r\n":
            i += 1
        return i

    def value(i, path):
        i = skip(i)
        lines[path] = line_of(i)
        ch = text[i]
        if ch == "{":
            i = skip(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key, i = json.decoder.scanstring(text, skip(i) + 1)
                lines.setdefault(path + (key,), line_of(i))
                i = skip(i)
                i = value(i + 1, path + (key,))
                i = skip(i)
                if text[i] == "}":
                    return i + 1
                i += 1
        if ch == "[":
            i = skip(i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = skip(value(i, path + (k,)))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = decoder.raw_decode(text, i)
        return end

    try:
        value(0, ())
    except (ValueError, IndexError):
        pass
    return lines


def parse_document(text: str, source: str = "<config>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = list(validator.iter_errors(doc))
    if errors:
        lines = locate_lines(text)
        err = jsonschema.exceptions.best_match(errors)
        path = tuple(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            if extra:
                path = path + (extra[0],)
        while path and path not in lines:
            path = path[:-1]
        line = lines.get(path, 1)
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{source}:{line}: {where}: {err.message}")
    return doc


def load_document(path) -> dict:
    p = Path(path)
    return parse_document(p.read_text(encoding="utf-8"), str(p))


# ------------------------------------------------------------ sweep axes


def find_sweeps(doc, path=()) -> list:
    """Paths of every ``{"sweep": [...]}`` marker in the document."""
    found = []
    if isinstance(doc, dict):
        if set(doc) == {SWEEP_KEY} and isinstance(doc[SWEEP_KEY], list):
            return [path]
        for k, v in doc.items():
            found += find_sweeps(v, path + (k,))
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            found += find_sweeps(v, path + (i,))
    return found


def _get(doc, path):
    for p in path:
        doc = doc[p]
    return doc


def substitute(doc: dict, path: tuple, value) -> dict:
    out = copy.deepcopy(doc)
    target = out
    for p in path[:-1]:
        target = target[p]
    target[path[-1]] = value
    return out


def sweep_axis(doc: dict) -> tuple:
    """``(axis_name, values, [point documents])`` for a document with sweeps.

    All markers must carry the same number of values; they advance together.
    """
    paths = find_sweeps(doc)
    if not paths:
        raise ConfigError("no sweep axis found; mark one with {\"sweep\": [...]}")
    values = [_get(doc, p)[SWEEP_KEY] for p in paths]
    if len({len(v) for v in values}) != 1:
        raise ConfigError("all sweep markers must list the same number of values")
    points = []
    for k in range(len(values[0])):
        point = doc
        for p, vals in zip(paths, values):
            point = substitute(point, p, vals[k])
        points.append(point)
    return str(paths[0][-1]), values[0], points


# ---------------------------------------------------------- typed builders


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls(load_document(path), Path(path).resolve().parent)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "RunConfig":
        return cls(parse_document(json.dumps(doc)), Path(base_dir))

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def _path(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def has_sweep(self) -> bool:
        return bool(find_sweeps(self.raw))

    @property
    def schemes(self) -> list:
        s = self.raw["scheme"]
        return s if isinstance(s, list) else [s]

    # model -------------------------------------------------------------
    def spin_star_params(self) -> SpinStarParams | None:
        m = self.section("model")
        if m["kind"] not in ("spin_star", "cpmg"):
            return None
        if "couplings" not in m:
            raise ConfigError("model.couplings is required for spin-star models")
        if "axes" in m:
            if len(m["axes"]) != len(m["couplings"]):
                raise ConfigError("model.axes must have one axis per coupling")
            return SpinStarParams.normalized(m["couplings"], m["axes"])
        return SpinStarParams.along_z(m["couplings"])

    def operator(self) -> SpectralOperator:
        m = self.section("model")
        kind = m["kind"]
        try:
            if kind == "spin_star":
                return build_spin_star(self.spin_star_params(), m.get("shifted", True))
            if kind == "cpmg":
                omega = m.get("omega")
                if omega is None:
                    raise ConfigError("model.omega is required for the cpmg model")
                seq = CpmgSequence.resonant(m.get("n_pulses", 4), omega)
                return spectral_from_dense(cpmg_effective_generator(self.spin_star_params(), seq, omega))
            return spectral_from_dense(self._dense_matrix(m))
        except DomainError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def _dense_matrix(self, m: dict) -> np.ndarray:
        if "file" in m:
            return load_matrix(self._path(m["file"]))
        if "matrix" in m:
            real = np.array(m["matrix"], dtype=float)
            imag = np.array(m.get("matrix_imag", np.zeros_like(real)), dtype=float)
            if real.shape != imag.shape:
                raise ConfigError("model.matrix and model.matrix_imag shapes differ")
            return real + 1j * imag
        raise ConfigError("dense model needs model.file or model.matrix")

    # noise -------------------------------------------------------------
    def noise(self, v: SpectralOperator) -> NoiseSpec | None:
        n = self.section("noise")
        if not n:
            return None
        p = self.spin_star_params()
        coherent = None
        if "omegas" in n:
            coherent = build_coherent_noise(n["omegas"])
        elif n.get("gamma", 0):
            if p is None:
                raise ConfigError("noise.gamma needs a spin-star model; give noise.omegas instead")
            coherent = build_coherent_noise(omegas_for_gamma(p, n["gamma"], v.norm))
        jumps = []
        for spec in n.get("lindblad", []):
            if "rates" in spec:
                rates = spec["rates"]
            elif "relative_rate" in spec:
                if p is None:
                    raise ConfigError("relative_rate needs a spin-star model")
                rates = [spec["relative_rate"] * abs(a) for a in p.couplings]
            else:
                raise ConfigError("lindblad entries need rates or relative_rate")
            jumps.extend(single_qubit_lindblad(spec["kind"], rates))
        if coherent is not None and coherent.shape[0] != v.dimension:
            raise ConfigError("coherent noise dimension does not match the model")
        return NoiseSpec(coherent, tuple(jumps))

    # scheme ------------------------------------------------------------
    def scheme(self, v: SpectralOperator, spec: dict | None = None):
        s = self.schemes[0] if spec is None else spec
        if s["kind"] == "repetitive":
            settings = RimSettings(s.get("tau", 0.2), s.get("phi", np.pi / 2))
            m = _rounds(s, lambda t: max(1, int(round(t / settings.tau))))
            return RepetitiveScheme(settings, m)
        if "tau0" in s:
            tau0 = s["tau0"]
        else:
            tau0 = s.get("tau0_factor", 1.0) * v.norm
            if s.get("signed", False):
                tau0 *= 2
        m = _rounds(s, lambda t: max(1, int(round(np.log2(1 + t * tau0 / np.pi)))))
        return AdaptivePlan(m, tau0)

    def initial_state(self) -> InitialState:
        i = self.section("init")
        kind = i.get("kind", "equal_superposition_of_eigenstates")
        if kind == "custom":
            if "file" not in i:
                raise ConfigError("custom init needs init.file")
            return InitialState("custom", matrix=load_matrix(self._path(i["file"])))
        return InitialState(kind, index=i.get("index"))

    @property
    def n_samples(self) -> int:
        return self.section("sampling").get("n_samples", 1000)

    @property
    def seed(self) -> int:
        return self.section("sampling").get("seed", 0)

    @property
    def repeats(self) -> int:
        return self.section("sampling").get("repeats", 1)


def _rounds(s: dict, from_time) -> int:
    if "m" in s and "t" in s:
        raise ConfigError("scheme takes m or t, not both")
    if "m" in s:
        if isinstance(s["m"], dict):
            raise ConfigError("unexpanded sweep marker in scheme.m")
        return s["m"]
    if "t" in s:
        if isinstance(s["t"], dict):
            raise ConfigError("unexpanded sweep marker in scheme.t")
        return from_time(s["t"])
    raise ConfigError("scheme needs m or t")


def load_matrix(path: Path) -> np.ndarray:
    """A square complex matrix from ``.npy`` or JSON ``{"real": ..., "imag": ...}``."""
    if not Path(path).is_file():
        raise ConfigError(f"referenced file {path} does not exist")
    if path.suffix == ".npy":
        return np.load(path)
    doc: Any = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        real = np.array(doc["real"], dtype=float)
        return real + 1j * np.array(doc.get("imag", np.zeros_like(real)), dtype=float)
    return np.array(doc, dtype=complex)
