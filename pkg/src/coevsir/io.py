"""Plain-text writers shared by the command line tools."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

SOLVER_HEADER = "t,p_S,p_I,p_R,phi,J"
SIM_HEADER = "t,p_S,p_I,p_R,phi,rho_SS,rho_SI,rho_II,rho_other"
COHORT_HEADER = "birth_time,mass_at_T"


def write_table(path, header: str, columns) -> Path:
    """CSV with 9 significant digits; NaN is written as ``nan``."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    if data.shape[1] != len(header.split(",")):
        raise ValueError(f"{len(header.split(','))} columns in header, {data.shape[1]} given")
    path = Path(path)
    np.savetxt(path, data, fmt="%.9g", delimiter=",", header=header, comments="")
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_edge_list(path, adjacency) -> Path:
    """One ``i j`` line per edge with ``i < j``, in the snapshot's labelling."""
    i, j = np.nonzero(np.triu(adjacency, k=1))
    path = Path(path)
    with open(path, "w") as fh:
        for a, b in zip(i.tolist(), j.tolist()):
            fh.write(f"{a} {b}\n")
    return path


def write_vertex_table(path, snapshot) -> Path:
    """``label,vertex,state,type`` for every vertex of a labelled snapshot."""
    names = np.array(["S", "I", "R"])
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("label,vertex,state,type\n")
        for k, (v, s, y) in enumerate(zip(snapshot.order, snapshot.states, snapshot.types)):
            fh.write(f"{k},{int(v)},{names[int(s)]},{float(y):.9g}\n")
    return path
