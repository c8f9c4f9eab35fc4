"""SWD1 container: self-describing binary files for sequences and maps.

Layout:

    bytes 0..4      magic b"SWD1"
    bytes 4..8      little-endian u32 header length
    header          UTF-8 JSON (version, record descriptors)
    payload         raw little-endian float32 arrays, concatenated in
                    header order, each in [depth][lateral][time] /
                    [depth][lateral] order
    last 4 bytes    little-endian u32 CRC32 of the payload

The header is the single source of array shapes; offsets are implied by
declaration order. Map pixels carrying no estimate are stored as NaN and
round-trip bit-exactly.
"""

import json
import struct
import zlib

import numpy as np

from .errors import ChecksumError, FormatError
from .fields import DatasetRecord, DisplacementSequence, ElasticityMap
from .geometry import GridGeom, PushDescriptor

MAGIC = b"SWD1"
VERSION = 1


def _geom_to_json(geom: GridGeom) -> dict:
    return {
        "depth_px": geom.depth_px,
        "lateral_px": geom.lateral_px,
        "depth_extent": geom.depth_extent,
        "lateral_extent": geom.lateral_extent,
    }


def _geom_from_json(obj: dict) -> GridGeom:
    return GridGeom(
        depth_px=int(obj["depth_px"]),
        lateral_px=int(obj["lateral_px"]),
        depth_extent=float(obj["depth_extent"]),
        lateral_extent=float(obj["lateral_extent"]),
    )


def _push_to_json(push: PushDescriptor) -> dict:
    return {
        "lateral_center_px": push.lateral_center_px,
        "element_halfwidth_px": push.element_halfwidth_px,
        "depth_extent": push.depth_extent,
        "start_delay": push.start_delay,
    }


def _push_from_json(obj: dict) -> PushDescriptor:
    return PushDescriptor(
        lateral_center_px=int(obj["lateral_center_px"]),
        element_halfwidth_px=int(obj["element_halfwidth_px"]),
        depth_extent=float(obj["depth_extent"]),
        start_delay=float(obj["start_delay"]),
    )


def _describe(record) -> tuple:
    """Return (descriptor dict, list of float32 arrays) for one record."""
    if isinstance(record, DatasetRecord):
        seq = record.sequence
        desc = {
            "kind": "sequence",
            "geom": _geom_to_json(seq.geom),
            "frames": seq.frames,
            "frame_rate": seq.frame_rate,
            "push": _push_to_json(seq.push),
            "label": None if record.label is None else float(record.label),
            "meta": {
                "phantom_id": record.phantom_id,
                "position_id": record.position_id,
                "push_id": record.push_id,
            },
            "arrays": [{"name": "data", "shape": list(seq.data.shape)}],
        }
        arrays = [seq.data]
        if record.label_map is not None:
            desc["arrays"].append(
                {"name": "label_map", "shape": list(record.label_map.values.shape)}
            )
            arrays.append(record.label_map.values)
        return desc, arrays
    if isinstance(record, ElasticityMap):
        desc = {
            "kind": "map",
            "geom": _geom_to_json(record.geom),
            "units": record.units,
            "arrays": [{"name": "values", "shape": list(record.values.shape)}],
        }
        return desc, [record.values]
    raise TypeError(f"cannot serialize record of type {type(record).__name__}")


def write_dataset(records, path):
    """Write records (DatasetRecord or ElasticityMap) to an SWD1 file."""
    records = list(records)
    descs = []
    blobs = []
    for rec in records:
        desc, arrays = _describe(rec)
        descs.append(desc)
        for arr in arrays:
            blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    header = json.dumps({"version": VERSION, "records": descs}).encode("utf-8")
    payload = b"".join(blobs)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def read_dataset(path) -> list:
    """Read an SWD1 file back into DatasetRecord / ElasticityMap objects."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not an SWD1 file (bad magic)")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len + 4:
        raise ChecksumError(f"{path}: truncated before payload")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    if header.get("version") != VERSION:
        raise FormatError(
            f"{path}: unsupported container version {header.get('version')!r}"
        )

    expected = sum(
        4 * int(np.prod(arr["shape"]))
        for rec in header["records"]
        for arr in rec["arrays"]
    )
    payload = raw[8 + header_len : 8 + header_len + expected]
    if len(payload) != expected or len(raw) < 8 + header_len + expected + 4:
        raise ChecksumError(f"{path}: payload truncated")
    (crc_stored,) = struct.unpack(
        "<I", raw[8 + header_len + expected : 8 + header_len + expected + 4]
    )
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise ChecksumError(f"{path}: payload CRC mismatch")

    records = []
    offset = 0

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
        offset += 4 * n
        return arr.reshape(shape).copy()

    for desc in header["records"]:
        geom = _geom_from_json(desc["geom"])
        arrays = {a["name"]: take(a["shape"]) for a in desc["arrays"]}
        if desc["kind"] == "sequence":
            seq = DisplacementSequence(
                geom=geom,
                data=arrays["data"],
                frame_rate=float(desc["frame_rate"]),
                push=_push_from_json(desc["push"]),
            )
            label_map = None
            if "label_map" in arrays:
                label_map = ElasticityMap(geom=geom, values=arrays["label_map"])
            meta = desc.get("meta", {})
            records.append(
                DatasetRecord(
                    sequence=seq,
                    label=desc.get("label"),
                    label_map=label_map,
                    phantom_id=str(meta.get("phantom_id", "")),
                    position_id=int(meta.get("position_id", 0)),
                    push_id=int(meta.get("push_id", 0)),
                )
            )
        elif desc["kind"] == "map":
            records.append(
                ElasticityMap(
                    geom=geom, values=arrays["values"], units=desc.get("units", "Pa")
                )
            )
        else:
            raise FormatError(f"{path}: unknown record kind {desc['kind']!r}")
    return records
