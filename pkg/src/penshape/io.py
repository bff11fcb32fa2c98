"""Run artifacts: cost history CSV, nodal snapshots and zero-contour polylines."""
from __future__ import annotations

import os
from collections import defaultdict

import numpy as np

from .mesh import Mesh
from .optimizer import IterationRecord, RunHistory

HISTORY_HEADER = "iter,cost,step,dcost,dg,seconds"
_ZERO_NUDGE = 1e-30


def _edge_point(mesh: Mesh, s, a, b):
    t = s[a] / (s[a] - s[b])
    return (1.0 - t) * mesh.vertices[a] + t * mesh.vertices[b]


def extract_zero_contour(mesh: Mesh, g) -> list:
    """Zero level set of the P1 field g as a list of (k, 2) point arrays.

    Marching triangles: each triangle whose vertex signs differ contributes
    one segment between the two crossed edges; segments sharing an edge are
    chained.  A closed curve repeats its first point at the end.  Vertices
    with g exactly 0 count as positive.
    """
    s = np.asarray(g, dtype=float)
    s = np.where(s == 0.0, _ZERO_NUDGE, s)
    tri = mesh.triangles
    pos = s[tri] > 0
    mixed = np.flatnonzero(pos.any(axis=1) & ~pos.all(axis=1))

    links = defaultdict(list)
    for t in mixed:
        v = tri[t]
        cut = [tuple(sorted((v[i], v[(i + 1) % 3])))
               for i in range(3) if pos[t, i] != pos[t, (i + 1) % 3]]
        a, b = cut
        links[a].append(b)
        links[b].append(a)

    seen = set()
    chains = []
    # open chains start at edges with a single neighbour (the domain boundary)
    starts = sorted(e for e, nb in links.items() if len(nb) == 1) + sorted(links)
    for first in starts:
        if first in seen:
            continue
        chain = [first]
        seen.add(first)
        prev, cur = None, first
        while True:
            nxt = [e for e in links[cur] if e != prev and e not in seen]
            if not nxt:
                if len(chain) > 2 and first in links[cur] and prev is not None:
                    chain.append(first)
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
            seen.add(cur)
        chains.append(np.array([_edge_point(mesh, s, a, b) for a, b in chain]))
    return chains


def write_contour(polylines, path) -> None:
    try:
        with open(path, "w") as fh:
            for k, line in enumerate(polylines):
                fh.write(f"polyline {k}\n")
                for x, y in np.asarray(line, dtype=float).tolist():
                    fh.write(f"{x!r} {y!r}\n")
    except OSError as exc:
        raise OSError(f"cannot write contour file {path}: {exc}") from exc


def read_contour(path) -> list:
    lines, cur = [], None
    with open(path) as fh:
        for raw in fh:
            if raw.startswith("polyline"):
                cur = []
                lines.append(cur)
            elif raw.strip():
                cur.append([float(v) for v in raw.split()])
    return [np.array(c, dtype=float).reshape(-1, 2) for c in lines]


def write_history(history: RunHistory, path) -> None:
    """CSV, one row per recorded iteration, closed by ``# termination=<reason>``."""
    try:
        with open(path, "w") as fh:
            fh.write(HISTORY_HEADER + "\n")
            for r in history.records:
                fh.write(f"{r.iteration},{r.cost!r},{r.step!r},{r.dcost!r},{r.dg!r},{r.seconds!r}\n")
            fh.write(f"# termination={history.termination}\n")
    except OSError as exc:
        raise OSError(f"cannot write history {path}: {exc}") from exc


class HistoryWriter:
    """Appends rows as the run progresses, so a partial history survives a crash."""

    def __init__(self, path):
        self.path = path
        try:
            self._fh = open(path, "w")
        except OSError as exc:
            raise OSError(f"cannot write history {path}: {exc}") from exc
        self._fh.write(HISTORY_HEADER + "\n")

    def add(self, r: IterationRecord) -> None:
        self._fh.write(f"{r.iteration},{r.cost!r},{r.step!r},{r.dcost!r},{r.dg!r},{r.seconds!r}\n")
        self._fh.flush()

    def close(self, termination: str) -> None:
        self._fh.write(f"# termination={termination}\n")
        self._fh.close()


def read_history(path) -> RunHistory:
    hist = RunHistory()
    with open(path) as fh:
        header = fh.readline().strip()
        if header != HISTORY_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for raw in fh:
            raw = raw.strip()
            if raw.startswith("# termination="):
                hist.termination = raw[len("# termination="):]
            elif raw:
                it, *vals = raw.split(",")
                hist.records.append(IterationRecord(int(it), *map(float, vals)))
    return hist


def snapshot_paths(out_dir, tag) -> tuple:
    """Field and contour file names; integer tags are zero padded to 4 digits."""
    if isinstance(tag, (int, np.integer)):
        tag = f"{int(tag):04d}"
    return (os.path.join(out_dir, f"g_{tag}.csv"), os.path.join(out_dir, f"contour_{tag}.txt"))


def write_field_snapshot(mesh: Mesh, g, iteration, out_dir) -> tuple:
    """Write ``g_XXXX.csv`` (x,y,g per vertex) and its ``contour_XXXX.txt``."""
    g = np.asarray(g, dtype=float)
    field_path, contour_path = snapshot_paths(out_dir, iteration)
    try:
        with open(field_path, "w") as fh:
            fh.write("x,y,g\n")
            for (x, y), v in zip(mesh.vertices.tolist(), g.tolist()):
                fh.write(f"{x!r},{y!r},{v!r}\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {field_path}: {exc}") from exc
    write_contour(extract_zero_contour(mesh, g), contour_path)
    return field_path, contour_path


def read_field_snapshot(path) -> tuple:
    """(vertices, g) from a snapshot CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2]
