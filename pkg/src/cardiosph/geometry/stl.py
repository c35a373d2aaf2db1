"""ASCII and binary STL reading/writing."""
from __future__ import annotations

import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import STLParseError

log = logging.getLogger(__name__)

_FACET = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (nv, 3)
    triangles: np.ndarray  # (nt, 3) vertex ids
    normals: np.ndarray    # (nt, 3) unit facet normals
    dropped: int = 0       # degenerate facets removed while loading

    @classmethod
    def from_facets(cls, tri_xyz, normals=None) -> "TriangleMesh":
        """Build a mesh from per-facet corner coordinates ``(nt, 3, 3)``,
        merging identical vertices and dropping zero-area facets."""
        tri_xyz = np.asarray(tri_xyz, dtype=float).reshape(-1, 3, 3)
        if not np.all(np.isfinite(tri_xyz)):
            raise STLParseError("non-finite vertex coordinate")
        cross = np.cross(tri_xyz[:, 1] - tri_xyz[:, 0], tri_xyz[:, 2] - tri_xyz[:, 0])
        area2 = np.linalg.norm(cross, axis=1)
        scale = max(np.abs(tri_xyz).max(initial=0.0), 1.0)
        keep = area2 > 1e-14 * scale**2
        dropped = int((~keep).sum())
        if dropped:
            log.warning("dropped %d degenerate facets", dropped)
        tri_xyz, cross, area2 = tri_xyz[keep], cross[keep], area2[keep]
        verts, inv = np.unique(tri_xyz.reshape(-1, 3), axis=0, return_inverse=True)
        return cls(verts, np.ravel(inv).reshape(-1, 3).astype(np.int64),
                   cross / area2[:, None] if len(area2) else np.zeros((0, 3)), dropped)

    @property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_watertight(self) -> bool:
        """Every edge shared by exactly two facets."""
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        e = np.sort(e, axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(len(counts)) and bool(np.all(counts == 2))


def _looks_binary(data: bytes) -> bool:
    if len(data) < 84:
        return not data.lstrip().lower().startswith(b"solid")
    n = struct.unpack_from("<I", data, 80)[0]
    if len(data) == 84 + 50 * n:
        return True
    return not data.lstrip().lower().startswith(b"solid")


def _parse_binary(data: bytes) -> TriangleMesh:
    if len(data) < 84:
        raise STLParseError("binary STL shorter than its 84-byte header", len(data))
    n = struct.unpack_from("<I", data, 80)[0]
    avail = (len(data) - 84) // 50
    if avail < n:
        raise STLParseError(f"truncated binary STL: header declares {n} facets, found {avail}",
                            84 + 50 * avail)
    rec = np.frombuffer(data, dtype=_FACET, count=n, offset=84)
    xyz = rec["v"].astype(float)
    bad = ~np.isfinite(xyz).all(axis=(1, 2))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise STLParseError("non-finite vertex coordinate", 84 + 50 * i + 12)
    return TriangleMesh.from_facets(xyz)


_TOKEN = re.compile(rb"\S+")


def _parse_ascii(data: bytes) -> TriangleMesh:
    tokens = [(m.group(0), m.start()) for m in _TOKEN.finditer(data)]
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens):
            raise STLParseError(f"unexpected end of file, expected {word.decode()!r}", len(data))
        tok, off = tokens[pos]
        if tok.lower() != word:
            raise STLParseError(f"expected {word.decode()!r}, found {tok[:20].decode(errors='replace')!r}", off)
        pos += 1

    def number():
        nonlocal pos
        if pos >= len(tokens):
            raise STLParseError("unexpected end of file inside a facet", len(data))
        tok, off = tokens[pos]
        try:
            val = float(tok)
        except ValueError:
            raise STLParseError(f"invalid number {tok[:20].decode(errors='replace')!r}", off) from None
        if not np.isfinite(val):
            raise STLParseError("non-finite vertex coordinate", off)
        pos += 1
        return val

    expect(b"solid")
    # optional solid name: skip tokens until the first facet/endsolid
    while pos < len(tokens) and tokens[pos][0].lower() not in (b"facet", b"endsolid"):
        pos += 1
    facets = []
    while True:
        if pos >= len(tokens):
            raise STLParseError(f"unexpected end of file after {len(facets)} facets (missing 'endsolid')", len(data))
        tok = tokens[pos][0].lower()
        if tok == b"endsolid":
            break
        expect(b"facet")
        expect(b"normal")
        for _ in range(3):
            number()
        expect(b"outer")
        expect(b"loop")
        tri = []
        for _ in range(3):
            expect(b"vertex")
            tri.append([number(), number(), number()])
        expect(b"endloop")
        expect(b"endfacet")
        facets.append(tri)
    return TriangleMesh.from_facets(np.array(facets, dtype=float).reshape(-1, 3, 3))


def parse_stl(source) -> TriangleMesh:
    """Read an STL from bytes, a path or a binary file object (format auto-detected)."""
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    elif isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source)
    else:
        data = source.read()
    if _looks_binary(data):
        return _parse_binary(data)
    return _parse_ascii(data)


def stl_ascii(mesh: TriangleMesh, name: str = "mesh") -> bytes:
    lines = [f"solid {name}"]
    for tri, nrm in zip(mesh.corners, mesh.normals):
        lines.append(f"  facet normal {nrm[0]:.9g} {nrm[1]:.9g} {nrm[2]:.9g}")
        lines.append("    outer loop")
        for v in tri:
            lines.append(f"      vertex {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    return ("\n".join(lines) + "\n").encode()


def stl_binary(mesh: TriangleMesh) -> bytes:
    rec = np.zeros(len(mesh.triangles), dtype=_FACET)
    rec["n"] = mesh.normals
    rec["v"] = mesh.corners
    header = b"binary STL".ljust(80, b"\0")
    return header + struct.pack("<I", len(rec)) + rec.tobytes()


def write_stl(mesh: TriangleMesh, path, binary: bool = True) -> None:
    Path(path).write_bytes(stl_binary(mesh) if binary else stl_ascii(mesh))


def box_mesh(lo=(0, 0, 0), hi=(1, 1, 1)) -> TriangleMesh:
    """Outward-oriented 12-facet box."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    c = np.array([[lo[0] if i & 1 == 0 else hi[0], lo[1] if i & 2 == 0 else hi[1],
                   lo[2] if i & 4 == 0 else hi[2]] for i in range(8)])
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = []
    for a, b, cc, d in quads:
        tris += [(a, b, cc), (a, cc, d)]
    return TriangleMesh.from_facets(c[np.array(tris)])


def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0, 0, 0)) -> TriangleMesh:
    """Geodesic sphere with outward facets."""
    t = (1 + 5**0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    V = np.array(verts) * radius + np.asarray(center, dtype=float)
    return TriangleMesh.from_facets(V[np.array(faces)])
