"""Volume-bundle file format: JSON manifest plus raw float32 payload.

The manifest names the grid, subject count and payload file; the payload is
the (n_voxels, n_subjects) matrix in row-major order (voxel index varying
slowest), little-endian IEEE-754 float32.  Payload length must equal
prod(dims) * n_subjects * 4 bytes exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import BundleFormatError
from .estimate import SubjectStack
from .model import GridSpec

MANIFEST_KEYS = {"dims", "n_subjects", "dtype", "order", "payload", "spacing"}


def write_bundle(stack: SubjectStack, manifest_path: str | Path) -> Path:
    """Write a stack as <path> (manifest) plus a sibling .f32 payload."""
    manifest_path = Path(manifest_path)
    payload_name = manifest_path.stem + ".f32"
    payload_path = manifest_path.with_name(payload_name)
    manifest = {
        "dims": list(stack.grid.dims),
        "n_subjects": stack.n_subjects,
        "dtype": "f32",
        "order": "row-major",
        "spacing": stack.grid.spacing,
        "payload": payload_name,
    }
    payload_path.write_bytes(
        np.ascontiguousarray(stack.values, dtype="<f4").tobytes())
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def read_bundle(manifest_path: str | Path) -> SubjectStack:
    """Load a bundle, validating the manifest/payload agreement."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"cannot read manifest {manifest_path}: {exc}") from exc
    unknown = set(manifest) - MANIFEST_KEYS
    if unknown:
        raise BundleFormatError(f"unknown manifest keys: {sorted(unknown)}")
    for key in ("dims", "n_subjects", "dtype", "order", "payload"):
        if key not in manifest:
            raise BundleFormatError(f"manifest missing key {key!r}")
    if manifest["dtype"] != "f32":
        raise BundleFormatError(f"unsupported dtype {manifest['dtype']!r}")
    if manifest["order"] != "row-major":
        raise BundleFormatError(f"unsupported order {manifest['order']!r}")
    dims = tuple(int(d) for d in manifest["dims"])
    n_subjects = int(manifest["n_subjects"])
    payload_path = manifest_path.with_name(manifest["payload"])
    try:
        raw = payload_path.read_bytes()
    except OSError as exc:
        raise BundleFormatError(f"cannot read payload {payload_path}: {exc}") from exc
    expected = math.prod(dims) * n_subjects * 4
    if len(raw) != expected:
        raise BundleFormatError(
            f"payload length {len(raw)} != dims*subjects*4 = {expected}")
    values = np.frombuffer(raw, dtype="<f4").astype(float)
    values = values.reshape(math.prod(dims), n_subjects)
    grid = GridSpec(dims=dims, spacing=float(manifest.get("spacing", 1.0)))
    return SubjectStack(grid=grid, values=values)
