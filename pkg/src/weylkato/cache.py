"""Binary on-disk cache for Spectrum objects.

Layout (all little-endian):
    8s   magic  b"WKSPEC01"
    u4   format version
    32s  sha256 digest of (geometry, potential)
    u8   number of eigenvalues
    u8   basis size
    u1   complex flag, then 7 padding bytes
    f8[] eigenvalues
    f8[] coefficients, row-major (real, or interleaved re/im)

The basis labels are not stored; they are regenerated from the geometry.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .spectral import (Spectrum, TorusSpec, content_hash, cube_basis, torus_basis)

MAGIC = b"WKSPEC01"
VERSION = 1
_HEADER = struct.Struct("<8sI32sQQB7x")

__all__ = ["cache_dir", "cache_path", "save_spectrum", "load_spectrum", "cached_eigensolve"]


def cache_dir():
    d = os.environ.get("WEYL_CACHE_DIR")
    if d:
        return Path(d)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "weylkato"


def cache_path(geometry, potential):
    return cache_dir() / f"{content_hash(geometry, potential)}.wks"


def save_spectrum(spec: Spectrum, path=None):
    """Write spec atomically (temp file then rename); returns the path."""
    path = Path(path) if path else cache_path(spec.geometry, spec.potential)
    path.parent.mkdir(parents=True, exist_ok=True)
    C = spec.coefficients
    cplx = np.iscomplexobj(C)
    header = _HEADER.pack(MAGIC, VERSION, bytes.fromhex(spec.hash()),
                          spec.eigenvalues.size, C.shape[0], int(cplx))
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".wks-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(spec.eigenvalues, dtype="<f8").tobytes())
            data = np.ascontiguousarray(C).view(float) if cplx else C
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_spectrum(geometry, potential, path=None):
    """Return the cached Spectrum or None when absent, stale or corrupt."""
    path = Path(path) if path else cache_path(geometry, potential)
    if not path.exists():
        return None
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        return None
    magic, ver, digest, n_eig, n_basis, cplx = _HEADER.unpack_from(raw)
    if magic != MAGIC or ver != VERSION:
        return None
    if digest.hex() != content_hash(geometry, potential):
        return None
    off = _HEADER.size
    count = n_basis * n_eig * (2 if cplx else 1)
    if len(raw) != off + 8 * (n_eig + count):
        return None
    w = np.frombuffer(raw, dtype="<f8", count=n_eig, offset=off).astype(float)
    off += 8 * n_eig
    C = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(float)
    C = C.view(complex).reshape(n_basis, n_eig) if cplx else C.reshape(n_basis, n_eig)
    if isinstance(geometry, TorusSpec):
        labels, _ = torus_basis(geometry)
    else:
        labels, _ = cube_basis(geometry)
    return Spectrum(w, C, labels, geometry, potential)


def cached_eigensolve(geometry, potential, use_cache=True):
    """Spectrum for (geometry, potential), from the cache when possible.

    Returns (spectrum, hit) where hit tells whether the cache was used.
    """
    from .spectral import build_cube_hamiltonian, build_torus_hamiltonian, eigensolve

    if use_cache:
        spec = load_spectrum(geometry, potential)
        if spec is not None:
            return spec, True
    if isinstance(geometry, TorusSpec):
        H = build_torus_hamiltonian(geometry, potential)
    else:
        H = build_cube_hamiltonian(geometry, potential)
    spec = eigensolve(H)
    if use_cache:
        try:
            save_spectrum(spec)
        except OSError:
            pass
    return spec, False
