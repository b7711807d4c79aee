"""Field export: per-subdomain CSV tables and legacy ASCII VTK grids."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .assembly import SystemForms
from .fespace import FeSpace
from .stepping import State

# VTK cell type of the six-node quadratic triangle
VTK_QUADRATIC_TRIANGLE = 22


def pressure_at_p2_nodes(forms: SystemForms, p: np.ndarray) -> np.ndarray:
    """Linear pressure evaluated at the velocity DOF points (vertices, then edge midpoints)."""
    mesh = forms.velocity.mesh
    mid = 0.5 * (p[mesh.edges[:, 0]] + p[mesh.edges[:, 1]])
    return np.concatenate([p, mid])


def _fmt(values: np.ndarray) -> list[str]:
    return [repr(float(v)) for v in values]


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _csv(header: list[str], columns: list[np.ndarray]) -> str:
    lines = [",".join(header)]
    for row in zip(*(_fmt(c) for c in columns)):
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _vtk(space: FeSpace, point_data: dict[str, np.ndarray], title: str) -> str:
    coords = space.coords
    n = len(coords)
    # local P2 order is vertices then edges 01, 12, 20, which matches VTK's layout
    cells = space.cell_dofs
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in coords.tolist()]
    out.append(f"CELLS {len(cells)} {len(cells) * 7}")
    out += ["6 " + " ".join(map(str, c)) for c in cells.tolist()]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(VTK_QUADRATIC_TRIANGLE)] * len(cells)
    out.append(f"POINT_DATA {n}")
    for name, values in point_data.items():
        if values.ndim == 2:
            out.append(f"VECTORS {name} double")
            out += [f"{a!r} {b!r} 0.0" for a, b in values.T.tolist()]
        else:
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out += _fmt(values)
    return "\n".join(out) + "\n"


def export_fields(state: State, forms: SystemForms, directory: str | os.PathLike) -> list[Path]:
    """Write ``fluid.csv``, ``porous.csv``, ``fluid.vtk`` and ``porous.vtk``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    V, H = forms.velocity, forms.head
    u = state.u.reshape(2, V.n_scalar)
    p = pressure_at_p2_nodes(forms, state.p)
    x, y = V.coords.T
    xp, yp = H.coords.T
    files = {
        "fluid.csv": _csv(["x", "y", "u1", "u2", "p"], [x, y, u[0], u[1], p]),
        "porous.csv": _csv(["x", "y", "phi"], [xp, yp, state.phi]),
        "fluid.vtk": _vtk(V, {"velocity": u, "pressure": p}, f"fluid t={state.t!r}"),
        "porous.vtk": _vtk(H, {"head": state.phi}, f"porous t={state.t!r}"),
    }
    paths = []
    for name, text in files.items():
        path = d / name
        _write_atomic(path, text)
        paths.append(path)
    return paths
