"""Deformation bundle: the single-file interchange record for CLI and viewer.

Binary layout: an ASCII header (format tag, endianness, ``meta`` key/value
lines, ``field name dtype dims...`` declarations, ``end``) followed by the raw
little-endian arrays in declared order. Floats are stored as f4, indices as
i4. A JSON text variant (same arrays, flattened, plus a dims table) serves
the browser viewer and debugging. Both writers are byte-deterministic: no
timestamps, sorted metadata keys, fixed field order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .deform import DeformationSubspace, MetaHandle
from .errors import BundleFormatError
from .handles import ControlPointSet, DeformCoordinates
from .mesh import TriMesh, _readonly

MAGIC = "metaforge-bundle 1"
TEXT_FORMAT = "metaforge-bundle-text"

# name -> (dtype char, trailing shape after the leading free dimension)
_FIELDS = (
    ("vertices", "f4", (3,)),
    ("faces", "i4", (3,)),
    ("control_indices", "i4", ()),
    ("rest_positions", "f4", (3,)),
    ("coordinates", "f4", None),  # (n, c): second dim tied to control count
    ("meta_handles", "f4", None),  # (m, c, 3)
    ("ranges", "f4", (2,)),
)
_DTYPES = {"f4": np.dtype("<f4"), "i4": np.dtype("<i4")}
_ONE_HOT_TOL = 1e-5


@dataclass(frozen=True, eq=False)
class DeformationBundle:
    """Everything the viewer and the fit/sample commands need, in one record.

    Arrays are held in float64/int64 in memory and quantized to f4/i4 on
    write; ``meta_handles`` may be empty (m = 0) for a coordinates-only
    bundle. ``metadata`` is a flat str->str map (tool version, seed, source
    mesh, creation parameters).
    """

    vertices: np.ndarray
    faces: np.ndarray
    control_indices: np.ndarray
    rest_positions: np.ndarray
    coordinates: np.ndarray
    meta_handles: np.ndarray
    ranges: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(np.asarray(self.vertices, dtype=np.float64)))
        object.__setattr__(self, "faces", _readonly(np.asarray(self.faces, dtype=np.int64)))
        object.__setattr__(
            self, "control_indices", _readonly(np.asarray(self.control_indices, dtype=np.int64))
        )
        object.__setattr__(
            self, "rest_positions", _readonly(np.asarray(self.rest_positions, dtype=np.float64))
        )
        object.__setattr__(
            self, "coordinates", _readonly(np.asarray(self.coordinates, dtype=np.float64))
        )
        object.__setattr__(
            self, "meta_handles", _readonly(np.asarray(self.meta_handles, dtype=np.float64))
        )
        object.__setattr__(self, "ranges", _readonly(np.asarray(self.ranges, dtype=np.float64)))
        self.validate()

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def control_count(self):
        return self.control_indices.size

    @property
    def handle_count(self):
        return self.meta_handles.shape[0]

    def validate(self):
        """Cross-dimension and value checks; raises BundleFormatError naming the field."""
        n = self.vertices.shape[0] if self.vertices.ndim == 2 else 0
        c = self.control_indices.size
        m = self.meta_handles.shape[0] if self.meta_handles.ndim == 3 else -1
        checks = (
            ("vertices", self.vertices.ndim == 2 and self.vertices.shape[1] == 3 and n > 0),
            ("faces", self.faces.ndim == 2 and self.faces.shape == (self.faces.shape[0], 3)),
            ("control_indices", self.control_indices.ndim == 1 and c > 0),
            ("rest_positions", self.rest_positions.shape == (c, 3)),
            ("coordinates", self.coordinates.shape == (n, c)),
            ("meta_handles", m >= 0 and self.meta_handles.shape == (m, c, 3)),
            ("ranges", self.ranges.shape == (m, 2) if m >= 0 else False),
        )
        for name, ok in checks:
            if not ok:
                raise BundleFormatError(f"field '{name}' has inconsistent dimensions")
        for name in ("vertices", "rest_positions", "coordinates", "meta_handles", "ranges"):
            if not np.isfinite(getattr(self, name)).all():
                raise BundleFormatError(f"field '{name}' contains non-finite values")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise BundleFormatError("field 'faces' references a vertex out of range")
        if self.control_indices.min() < 0 or self.control_indices.max() >= n:
            raise BundleFormatError("field 'control_indices' out of vertex range")
        if len(np.unique(self.control_indices)) != c:
            raise BundleFormatError("field 'control_indices' has duplicates")
        one_hot = np.zeros((c, c))
        one_hot[np.arange(c), np.arange(c)] = 1.0
        if np.abs(self.coordinates[self.control_indices] - one_hot).max() > _ONE_HOT_TOL:
            raise BundleFormatError("field 'coordinates' control rows are not one-hot")
        if m > 0:
            if (self.ranges[:, 0] > 0.0).any() or (self.ranges[:, 1] < 0.0).any():
                raise BundleFormatError("field 'ranges' must contain 0 in every interval")
        for key, value in self.metadata.items():
            text = f"{key} {value}"
            if "\n" in text or not isinstance(key, str) or not isinstance(value, str):
                raise BundleFormatError(f"metadata entry '{key}' is not single-line text")

    # -- reconstruction of package objects -------------------------------

    def mesh(self):
        return TriMesh(self.vertices, self.faces)

    def coords(self):
        controls = ControlPointSet(self.control_indices, self.rest_positions)
        return DeformCoordinates(self.coordinates, controls)

    def subspace(self):
        """Rebuild the deformation subspace; raises BundleFormatError if m = 0.

        Handle rows are renormalized to unit Frobenius norm (f4 quantization
        perturbs the stored norm by ~1e-7).
        """
        if self.handle_count == 0:
            raise BundleFormatError("bundle has no meta-handles")
        coords = self.coords()
        handles = []
        for i, H in enumerate(self.meta_handles):
            norm = np.linalg.norm(H)
            if norm <= 0.0:
                raise BundleFormatError(f"field 'meta_handles' row {i} is all zero")
            handles.append(MetaHandle(H / norm))
        return DeformationSubspace(
            handles=tuple(handles),
            ranges=self.ranges,
            controls=coords.controls,
            coords=coords,
        )


def bundle_from_parts(mesh, coords, subspace=None, metadata=None):
    """Assemble a bundle from package objects (empty subspace when None)."""
    c = coords.control_count
    if subspace is None:
        handles = np.zeros((0, c, 3))
        ranges = np.zeros((0, 2))
    else:
        handles = subspace.handle_stack
        ranges = subspace.ranges
    return DeformationBundle(
        vertices=mesh.vertices,
        faces=mesh.faces,
        control_indices=coords.controls.indices,
        rest_positions=coords.controls.rest_positions,
        coordinates=coords.W_vertices,
        meta_handles=handles,
        ranges=ranges,
        metadata=dict(metadata or {}),
    )


def _field_arrays(bundle):
    yield "vertices", bundle.vertices.astype("<f4")
    yield "faces", bundle.faces.astype("<i4")
    yield "control_indices", bundle.control_indices.astype("<i4")
    yield "rest_positions", bundle.rest_positions.astype("<f4")
    yield "coordinates", bundle.coordinates.astype("<f4")
    yield "meta_handles", bundle.meta_handles.astype("<f4")
    yield "ranges", bundle.ranges.astype("<f4")


def write_bundle(bundle, path):
    """Write the binary bundle; byte-identical for identical content."""
    bundle.validate()
    dtype_of = {name: dtype for name, dtype, _ in _FIELDS}
    lines = [MAGIC, "endian little"]
    for key in sorted(bundle.metadata):
        lines.append(f"meta {key} {bundle.metadata[key]}")
    arrays = list(_field_arrays(bundle))
    for name, arr in arrays:
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"field {name} {dtype_of[name]} {dims}")
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def read_bundle(path):
    """Read a bundle file, accepting both the binary and the text variant."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:1] == b"{":
        return _parse_text(blob, path)
    return _parse_binary(blob, path)


def _parse_binary(blob, path):
    header_end = blob.find(b"\nend\n")
    if not blob.startswith(MAGIC.encode("ascii")) or header_end < 0:
        raise BundleFormatError(f"{path}: not a deformation bundle")
    try:
        header = blob[: header_end + 4].decode("ascii")
    except UnicodeDecodeError as exc:
        raise BundleFormatError(f"{path}: header is not ASCII") from exc
    metadata = {}
    declared = []
    for line in header.splitlines()[1:]:
        parts = line.split(" ")
        if parts[0] == "endian":
            if parts[1:] != ["little"]:
                raise BundleFormatError(f"{path}: unsupported endianness {parts[1:]}")
        elif parts[0] == "meta":
            if len(parts) < 3:
                raise BundleFormatError(f"{path}: malformed meta line '{line}'")
            metadata[parts[1]] = " ".join(parts[2:])
        elif parts[0] == "field":
            if len(parts) < 4:
                raise BundleFormatError(f"{path}: malformed field line '{line}'")
            name, dtype = parts[1], parts[2]
            if dtype not in _DTYPES:
                raise BundleFormatError(f"{path}: field '{name}' has unknown dtype {dtype}")
            try:
                shape = tuple(int(d) for d in parts[3:])
            except ValueError as exc:
                raise BundleFormatError(f"{path}: field '{name}' has non-integer dims") from exc
            if any(d < 0 for d in shape):
                raise BundleFormatError(f"{path}: field '{name}' has negative dims")
            declared.append((name, dtype, shape))
        elif parts[0] == "end":
            break
        else:
            raise BundleFormatError(f"{path}: unknown header line '{line}'")
    expected = [name for name, _, _ in _FIELDS]
    if [name for name, _, _ in declared] != expected:
        raise BundleFormatError(
            f"{path}: header must declare fields {expected} in order, "
            f"got {[name for name, _, _ in declared]}"
        )
    offset = header_end + 5
    arrays = {}
    for name, dtype, shape in declared:
        dt = _DTYPES[dtype]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * dt.itemsize
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise BundleFormatError(f"{path}: field '{name}' is truncated")
        arrays[name] = np.frombuffer(chunk, dtype=dt).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise BundleFormatError(f"{path}: {len(blob) - offset} trailing bytes after arrays")
    try:
        return DeformationBundle(**arrays, metadata=metadata)
    except BundleFormatError as exc:
        raise BundleFormatError(f"{path}: {exc}") from exc


def write_bundle_text(bundle, path):
    """Write the JSON text variant (flat arrays + dims table) for the viewer."""
    bundle.validate()
    dims = {}
    data = {}
    for name, arr in _field_arrays(bundle):
        dims[name] = list(arr.shape)
        data[name] = [float(x) if arr.dtype.kind == "f" else int(x) for x in arr.reshape(-1)]
    doc = {
        "format": TEXT_FORMAT,
        "version": 1,
        "metadata": {k: bundle.metadata[k] for k in sorted(bundle.metadata)},
        "dims": dims,
        "data": data,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=1, sort_keys=False)
        fh.write("\n")


def _parse_text(blob, path):
    try:
        doc = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != TEXT_FORMAT:
        raise BundleFormatError(f"{path}: not a deformation bundle")
    if doc.get("version") != 1:
        raise BundleFormatError(f"{path}: unsupported bundle version {doc.get('version')}")
    dims = doc.get("dims")
    data = doc.get("data")
    if not isinstance(dims, dict) or not isinstance(data, dict):
        raise BundleFormatError(f"{path}: missing dims/data tables")
    arrays = {}
    for name, dtype, _ in _FIELDS:
        if name not in dims or name not in data:
            raise BundleFormatError(f"{path}: field '{name}' missing")
        shape = tuple(int(d) for d in dims[name])
        flat = np.asarray(data[name], dtype=_DTYPES[dtype])
        if flat.size != int(np.prod(shape, dtype=np.int64)):
            raise BundleFormatError(f"{path}: field '{name}' has {flat.size} values, dims {shape}")
        arrays[name] = flat.reshape(shape)
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise BundleFormatError(f"{path}: metadata must be a table")
    try:
        return DeformationBundle(**arrays, metadata={str(k): str(v) for k, v in metadata.items()})
    except BundleFormatError as exc:
        raise BundleFormatError(f"{path}: {exc}") from exc
