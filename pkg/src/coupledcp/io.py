"""Tensor file formats and CSV exports.

Binary format ("CT3D"): 4 magic bytes ``CT3D``, three little-endian uint64
dims (I, J, K), then I*J*K little-endian float64 values with the third index
running fastest (C order of the (I, J, K) array).

CSV format: one line per entry ``i,j,k,value`` with 1-based indices.
"""

import struct

import numpy as np

_MAGIC = b"CT3D"


def save_tensor(path, T):
    T = np.ascontiguousarray(T, dtype="<f8")
    if T.ndim != 3:
        raise ValueError("expected a 3-way array")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<3Q", *T.shape))
        fh.write(T.tobytes())


def load_tensor(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        dims = struct.unpack("<3Q", fh.read(24))
        count = dims[0] * dims[1] * dims[2]
        data = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
        if data.size != count:
            raise ValueError("truncated tensor file")
    return data.reshape(dims).astype(float)


def save_tensor_csv(path, T):
    T = np.asarray(T)
    if T.ndim != 3:
        raise ValueError("expected a 3-way array")
    with open(path, "w") as fh:
        for (i, j, k), v in np.ndenumerate(T):
            fh.write(f"{i + 1},{j + 1},{k + 1},{v!r}\n")


def load_tensor_csv(path, dims=None):
    """Read ``i,j,k,value`` lines (1-based indices). If ``dims`` is omitted it
    is inferred from the largest index per mode."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j, k, v = line.split(",")
            rows.append((int(i), int(j), int(k), float(v)))
    if not rows:
        raise ValueError("empty tensor CSV")
    if dims is None:
        dims = tuple(max(r[m] for r in rows) for m in range(3))
    T = np.zeros(dims)
    for i, j, k, v in rows:
        T[i - 1, j - 1, k - 1] = v
    return T


def save_matrix_csv(path, M):
    np.savetxt(path, np.asarray(M), delimiter=",")


def trace_to_csv(path, trace):
    """Write a solve trace as ``iteration,objective`` lines with a header."""
    with open(path, "w") as fh:
        fh.write("iteration,objective\n")
        for it, val in enumerate(trace.objective_per_iter):
            fh.write(f"{it},{float(val)!r}\n")
