"""Binary k-space/mask containers, run configuration files, CSV and PGM output.

PKSP (k-space stack), little-endian::

    b"PKSP" | version u16 | count u32 | height u32 | width u32
    count * height * width complex samples as float32 (re, im), row-major

PMSK (mask), little-endian::

    b"PMSK" | version u16 | kind u8 (0 full grid, 1 lines) | value_type u8
    (0 binary, 1 probabilities) | height u32 | width u32
    H * W (kind 0) or W (kind 1) float32 values

Headers are validated against the file size before any payload is read.
"""

import csv
import os
import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, DataValidationError
from .masks import MaskKind, as_grid_shape
from .optim import ProMConfig

__all__ = [
    "read_kspace",
    "write_kspace",
    "read_mask",
    "write_mask",
    "target_path",
    "probability_path",
    "read_config",
    "parse_config",
    "write_trace_csv",
    "write_pgm",
    "read_pgm",
]

KSPACE_MAGIC = b"PKSP"
MASK_MAGIC = b"PMSK"
FORMAT_VERSION = 1

_KSPACE_HEADER = struct.Struct("<4sHIII")
_MASK_HEADER = struct.Struct("<4sHBBII")

BINARY, PROBABILITY = 0, 1
_KIND_CODES = {MaskKind.FULL_2D: 0, MaskKind.LINES_1D: 1}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def target_path(kspace_path) -> Path:
    """Sibling file holding the target images of a PKSP file (``x.pksp`` -> ``x.target.pksp``)."""
    p = Path(kspace_path)
    return p.with_name(p.stem + ".target" + (p.suffix or ".pksp"))


def probability_path(mask_path) -> Path:
    """Probability mask written next to a binary mask (``m.pmsk`` -> ``m.pmsk.prob``)."""
    p = Path(mask_path)
    return p.with_name(p.name + ".prob")


def _read_header(fh, header, path):
    raw = fh.read(header.size)
    if len(raw) != header.size:
        raise DataValidationError(f"{path}: file too short for header")
    return header.unpack(raw)


def write_kspace(path, kspace):
    """Write a ``(count, H, W)`` (or single ``(H, W)``) complex stack as PKSP."""
    data = np.asarray(kspace)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise DataValidationError(f"k-space must be (count, H, W), got shape {data.shape}")
    count, height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(_KSPACE_HEADER.pack(KSPACE_MAGIC, FORMAT_VERSION, count, height, width))
        fh.write(np.ascontiguousarray(data, dtype="<c8").tobytes())


def read_kspace(path) -> np.ndarray:
    """Read a PKSP file into a complex128 array of shape ``(count, H, W)``."""
    with open(path, "rb") as fh:
        magic, version, count, height, width = _read_header(fh, _KSPACE_HEADER, path)
        if magic != KSPACE_MAGIC:
            raise DataValidationError(f"{path}: bad magic {magic!r}, expected {KSPACE_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise DataValidationError(f"{path}: unsupported version {version}")
        if min(count, height, width) < 1:
            raise DataValidationError(f"{path}: empty dimensions {count}x{height}x{width}")
        expected = 8 * count * height * width
        actual = os.fstat(fh.fileno()).st_size - _KSPACE_HEADER.size
        if actual != expected:
            raise DataValidationError(f"{path}: payload is {actual} bytes, header implies {expected}")
        data = np.frombuffer(fh.read(expected), dtype="<c8").reshape(count, height, width)
    return data.astype(np.complex128)


def write_mask(path, values, shape, kind=MaskKind.FULL_2D, value_type=BINARY):
    shape = as_grid_shape(shape)
    kind = MaskKind.parse(kind)
    values = np.asarray(values, dtype=np.float64).ravel()
    n = shape.size if kind is MaskKind.FULL_2D else shape.width
    if values.size != n:
        raise DataValidationError(f"mask has {values.size} values, expected {n}")
    _check_mask_values(values, value_type, path)
    with open(path, "wb") as fh:
        fh.write(_MASK_HEADER.pack(MASK_MAGIC, FORMAT_VERSION, _KIND_CODES[kind], value_type, *shape))
        fh.write(values.astype("<f4").tobytes())


def _check_mask_values(values, value_type, path):
    if value_type == BINARY:
        if not np.all((values == 0) | (values == 1)):
            raise DataValidationError(f"{path}: binary mask contains values other than 0 and 1")
    elif value_type == PROBABILITY:
        if not np.all((values >= 0) & (values <= 1)):
            raise DataValidationError(f"{path}: probabilities outside [0, 1]")
    else:
        raise DataValidationError(f"{path}: unknown value type {value_type}")


def read_mask(path):
    """Read a PMSK file.

    Returns
    -------
    values : ndarray
        float64 values, length ``H * W`` or ``W``.
    shape : GridShape
    kind : MaskKind
    value_type : int
        0 for binary, 1 for probabilities.
    """
    with open(path, "rb") as fh:
        magic, version, kind_code, value_type, height, width = _read_header(fh, _MASK_HEADER, path)
        if magic != MASK_MAGIC:
            raise DataValidationError(f"{path}: bad magic {magic!r}, expected {MASK_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise DataValidationError(f"{path}: unsupported version {version}")
        if kind_code not in _CODE_KINDS:
            raise DataValidationError(f"{path}: unknown mask kind code {kind_code}")
        if value_type not in (BINARY, PROBABILITY):
            raise DataValidationError(f"{path}: unknown value type {value_type}")
        shape = as_grid_shape((height, width))
        kind = _CODE_KINDS[kind_code]
        n = shape.size if kind is MaskKind.FULL_2D else shape.width
        actual = os.fstat(fh.fileno()).st_size - _MASK_HEADER.size
        if actual != 4 * n:
            raise DataValidationError(f"{path}: payload is {actual} bytes, header implies {4 * n}")
        values = np.frombuffer(fh.read(4 * n), dtype="<f4").astype(np.float64)
    _check_mask_values(values, value_type, path)
    return values, shape, kind, value_type


# run configuration ----------------------------------------------------------

# file key -> (ProMConfig field, parser); num_runs is not part of ProMConfig
_CONFIG_KEYS = {
    "alpha": ("alpha", float),
    "iterations": ("iterations", int),
    "lr": ("learning_rate", float),
    "batch": ("batch_size", int),
    "mc_samples": ("mc_samples", int),
    "tau_start": ("tau_start", float),
    "tau_end": ("tau_end", float),
    "explore_fraction": ("explore_fraction", float),
    "constrain_end_fraction": ("constrain_end_fraction", float),
    "anneal_power": ("anneal_power", float),
    "adam_eps": ("adam_eps", float),
    "seed": ("seed", int),
    "mask_kind": ("mask_kind", MaskKind.parse),
    "num_runs": ("num_runs", int),
}
DEFAULT_NUM_RUNS = 10


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines into ``(ProMConfig, num_runs)``.

    ``#`` starts a comment. Unknown or repeated keys are rejected; missing
    keys keep their defaults.
    """
    kwargs, num_runs, seen = {}, DEFAULT_NUM_RUNS, set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        name, conv = _CONFIG_KEYS[key]
        try:
            parsed = conv(value)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        if key == "num_runs":
            num_runs = parsed
        else:
            kwargs[name] = parsed
    if num_runs < 1:
        raise ConfigurationError(f"{source}: num_runs must be >= 1")
    return ProMConfig(**kwargs), num_runs


def read_config(path):
    return parse_config(Path(path).read_text(), source=str(path))


def format_config(config: ProMConfig, num_runs=DEFAULT_NUM_RUNS) -> str:
    """Inverse of :func:`parse_config` for the file-representable fields."""
    lines = []
    for key, (name, _) in _CONFIG_KEYS.items():
        value = num_runs if key == "num_runs" else getattr(config, name)
        if isinstance(value, MaskKind):
            value = value.value
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


# reports ---------------------------------------------------------------------

TRACE_COLUMNS = ("iteration", "loss", "sum_theta", "S", "tau")


def write_trace_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for it, loss, sum_theta, budget, tau in rows:
            writer.writerow([int(it), repr(float(loss)), repr(float(sum_theta)), int(budget), repr(float(tau))])


def write_metrics_csv(path, report):
    """Per-slice rows followed by a ``mean`` row."""
    names = report.metrics
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slice", *names])
        for i in range(len(report)):
            writer.writerow([i, *(repr(report.per_item[n][i]) for n in names)])
        agg = report.aggregate
        writer.writerow(["mean", *(repr(agg[n]) for n in names)])


def write_pgm(path, image):
    """Write an 8-bit binary PGM; ``image`` must already hold integers in ``[0, 255]``."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise DataValidationError(f"PGM export needs a 2D image, got shape {image.shape}")
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.clip(image, 0, 255).astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5" or parts[3] != b"255":
        raise DataValidationError(f"{path}: not an 8-bit binary PGM")
    width, height = int(parts[1]), int(parts[2])
    pixels = data[len(data) - width * height:]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
