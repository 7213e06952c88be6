"""Plain-text file formats: meshes, boundary data, solution and table CSVs.

All floats are written with 17 significant digits so that save followed by
load reproduces every value bit-exactly.
"""

import numpy as np

from .refbody import ReferenceBody

_MESH_HEADER = "gravelast-mesh v1"


class MeshFormatError(ValueError):
    """A text input file violates its format; the message names the line."""

    def __init__(self, path, line_no, message):
        super().__init__("%s:%d: %s" % (path, line_no, message))
        self.path = str(path)
        self.line_no = line_no


def _fmt(x):
    return "%.17g" % x


def save_mesh(path, body):
    """Write a ReferenceBody in the versioned text mesh format."""
    with open(path, "w") as fh:
        fh.write(_MESH_HEADER + "\n")
        fh.write("nodes %d\n" % body.n_nodes)
        for x, y, z in body.nodes:
            fh.write("%s %s %s\n" % (_fmt(x), _fmt(y), _fmt(z)))
        fh.write("elements %d\n" % body.n_elements)
        for (i, j, k, l), rho in zip(body.elements, body.rho_ref):
            fh.write("%d %d %d %d %s\n" % (i, j, k, l, _fmt(rho)))


def load_mesh(path):
    """Read the text mesh format back into a ReferenceBody."""
    with open(path) as fh:
        lines = fh.read().splitlines()

    def need(idx, what):
        if idx >= len(lines):
            raise MeshFormatError(path, len(lines) + 1,
                                  "file ends where %s was expected" % what)
        return lines[idx]

    if need(0, "the header") != _MESH_HEADER:
        raise MeshFormatError(path, 1, "expected header %r" % _MESH_HEADER)

    def count_line(idx, tag):
        parts = need(idx, "'%s <count>'" % tag).split()
        if len(parts) != 2 or parts[0] != tag:
            raise MeshFormatError(path, idx + 1, "expected '%s <count>'" % tag)
        try:
            n = int(parts[1])
        except ValueError:
            raise MeshFormatError(path, idx + 1,
                                  "count %r is not an integer" % parts[1])
        if n < 0:
            raise MeshFormatError(path, idx + 1, "count must be >= 0")
        return n

    n_nodes = count_line(1, "nodes")
    nodes = np.empty((n_nodes, 3))
    row = 2
    for i in range(n_nodes):
        parts = need(row, "a node line").split()
        if len(parts) != 3:
            raise MeshFormatError(path, row + 1,
                                  "expected three coordinates, got %d"
                                  % len(parts))
        try:
            nodes[i] = [float(p) for p in parts]
        except ValueError:
            raise MeshFormatError(path, row + 1, "malformed coordinate")
        row += 1

    n_elem = count_line(row, "elements")
    row += 1
    elements = np.empty((n_elem, 4), dtype=np.int64)
    rho = np.empty(n_elem)
    for e in range(n_elem):
        parts = need(row, "an element line").split()
        if len(parts) != 5:
            raise MeshFormatError(
                path, row + 1,
                "expected four node indices and a density, got %d fields"
                % len(parts))
        try:
            elements[e] = [int(p) for p in parts[:4]]
            rho[e] = float(parts[4])
        except ValueError:
            raise MeshFormatError(path, row + 1, "malformed element line")
        row += 1

    for extra in range(row, len(lines)):
        if lines[extra].strip():
            raise MeshFormatError(path, extra + 1,
                                  "unexpected content after the element block")

    try:
        return ReferenceBody(nodes, elements, rho)
    except ValueError as exc:
        raise MeshFormatError(path, row, str(exc))


def load_boundary_values(path):
    """Read 'node_index x y z' lines; returns (indices, positions).

    Blank lines and '#' comments are allowed.
    """
    idx = []
    pos = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 4:
                raise MeshFormatError(
                    path, line_no,
                    "expected 'node_index x y z', got %d fields" % len(parts))
            try:
                idx.append(int(parts[0]))
                pos.append([float(p) for p in parts[1:]])
            except ValueError:
                raise MeshFormatError(path, line_no, "malformed boundary line")
    if not idx:
        raise MeshFormatError(path, 1, "boundary file has no entries")
    return np.array(idx, dtype=np.int64), np.array(pos)


def save_solution_csv(path, positions):
    """Write nodal positions as 'node,x,y,z'; non-finite values are refused."""
    positions = np.asarray(positions)
    if not np.isfinite(positions).all():
        raise ValueError(
            "solution contains non-finite positions; refusing to save")
    with open(path, "w") as fh:
        fh.write("node,x,y,z\n")
        for n, (x, y, z) in enumerate(positions):
            fh.write("%d,%s,%s,%s\n" % (n, _fmt(x), _fmt(y), _fmt(z)))


def load_solution_csv(path, n_nodes=None):
    """Read a solution CSV back into an (N, 3) position array."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "node,x,y,z":
        raise MeshFormatError(path, 1, "expected header 'node,x,y,z'")
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MeshFormatError(path, line_no, "expected 4 comma-separated "
                                  "fields, got %d" % len(parts))
        try:
            n = int(parts[0])
            xyz = [float(p) for p in parts[1:]]
        except ValueError:
            raise MeshFormatError(path, line_no, "malformed solution row")
        if n != len(rows):
            raise MeshFormatError(path, line_no,
                                  "node indices must run 0,1,2,... (got %d)" % n)
        rows.append(xyz)
    pos = np.array(rows)
    if n_nodes is not None and pos.shape[0] != n_nodes:
        raise MeshFormatError(path, len(lines),
                              "solution has %d nodes, mesh has %d"
                              % (pos.shape[0], n_nodes))
    return pos


def save_history_csv(path, rows):
    """Write per-iteration rows (iter, e_str, e_pot, total, grad_norm, min_det)."""
    with open(path, "w") as fh:
        fh.write("iter,e_str,e_pot,total,grad_norm,min_det\n")
        for it, e_str, e_pot, total, gnorm, mdet in rows:
            fh.write("%d,%s,%s,%s,%s,%s\n" % (
                it, _fmt(e_str), _fmt(e_pot), _fmt(total), _fmt(gnorm),
                _fmt(mdet)))


def save_density_csv(path, density):
    with open(path, "w") as fh:
        fh.write("element,density\n")
        for e, rho in enumerate(density):
            fh.write("%d,%s\n" % (e, _fmt(rho)))


def save_stress_csv(path, stress):
    cols = "sxx,sxy,sxz,syx,syy,syz,szx,szy,szz"
    with open(path, "w") as fh:
        fh.write("element," + cols + "\n")
        for e, sig in enumerate(stress):
            fh.write("%d,%s\n" % (e, ",".join(_fmt(v) for v in sig.ravel())))
