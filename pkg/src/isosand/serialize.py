"""Versioned JSON graph documents and deterministic CSV writers.

Schema version 1.  Floats are serialized with repr (shortest round-trip
form), so identical inputs produce byte-identical files; CSV column
orders are part of the schema.
"""

from __future__ import annotations

import json

import numpy as np

from .isograph import IsoradialGraph, SurfaceLift

SCHEMA_VERSION = 1


def graph_to_json(g: IsoradialGraph, lift: SurfaceLift | None = None,
                  weights: dict | None = None, diagnostics: dict | None = None) -> dict:
    """Serializable document for a patch, optional lift and weight sets.

    `weights` maps modulus values to WeightedGraph instances; they are
    stored under the "weights" section keyed by repr(k).
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": g.kind,
        "d": int(g.d),
        "epsilon": float(g.epsilon),
        "origin": int(g.origin),
        "palette": [float(a) for a in g.palette],
        "vertices": {
            "x": [float(v) for v in g.positions.real],
            "y": [float(v) for v in g.positions.imag],
            "boundary": [bool(b) for b in g.boundary],
        },
        "edges": {
            "u": [int(v) for v in g.edges[:, 0]],
            "v": [int(v) for v in g.edges[:, 1]],
            "theta_bar": [float(v) for v in g.theta_bar],
            "alpha_bar": [float(v) for v in g.alpha_bar],
        },
        "duals": {
            "x": [float(v) for v in g.dual_positions.real],
            "y": [float(v) for v in g.dual_positions.imag],
        },
        "diamond_edges": {
            "primal": [int(v) for v in g.diamond_edges[:, 0]],
            "dual": [int(v) for v in g.diamond_edges[:, 1]],
            "type": [int(v) for v in g.diamond_type],
            "sign": [int(v) for v in g.diamond_sign],
        },
        "meta": {k: v for k, v in g.meta.items() if not k.startswith("_")},
    }
    if lift is not None:
        doc["lift"] = {"coords": lift.coords.tolist(), "n_primal": int(lift.nv)}
    if weights:
        doc["weights"] = {
            repr(float(k)): {
                "rho": [float(v) for v in w.rho],
                "mass2": [float(v) for v in w.mass2],
                "diag": [float(v) for v in w.diag],
            }
            for k, w in weights.items()
        }
    if diagnostics:
        doc["diagnostics"] = diagnostics
    return doc


def graph_from_json(doc: dict):
    """Rebuild (graph, lift-or-None) from a schema-1 document."""
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {doc.get('schema_version')!r}")
    g = IsoradialGraph(
        kind=doc["kind"],
        d=int(doc["d"]),
        palette=np.array(doc["palette"]),
        epsilon=float(doc["epsilon"]),
        positions=np.array(doc["vertices"]["x"]) + 1j * np.array(doc["vertices"]["y"]),
        edges=np.stack([doc["edges"]["u"], doc["edges"]["v"]], axis=1).astype(np.int32),
        theta_bar=np.array(doc["edges"]["theta_bar"]),
        alpha_bar=np.array(doc["edges"]["alpha_bar"]),
        origin=int(doc["origin"]),
        boundary=np.array(doc["vertices"]["boundary"], dtype=bool),
        dual_positions=np.array(doc["duals"]["x"]) + 1j * np.array(doc["duals"]["y"]),
        diamond_edges=np.stack([doc["diamond_edges"]["primal"],
                                doc["diamond_edges"]["dual"]], axis=1).astype(np.int32),
        diamond_type=np.array(doc["diamond_edges"]["type"], dtype=np.int8),
        diamond_sign=np.array(doc["diamond_edges"]["sign"], dtype=np.int8),
        meta=dict(doc.get("meta", {})),
    )
    lift = None
    if "lift" in doc:
        lift = SurfaceLift(coords=np.array(doc["lift"]["coords"], dtype=np.int32),
                           nv=int(doc["lift"]["n_primal"]))
    return g, lift


def dump_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    """Deterministic CSV: repr floats, LF newlines, no quoting."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _lift_columns(d: int):
    return [f"n_{j}" for j in range(d)]


def write_green_csv(path, g: IsoradialGraph, lift: SurfaceLift, gf) -> None:
    header = ["vertex", "x", "y", *_lift_columns(g.d), "U", "Gr"]
    rows = []
    for v in gf.region:
        rows.append([int(v), g.positions[v].real, g.positions[v].imag,
                     *lift.coords[v].tolist(), gf.U[v], gf.Gr[v]])
    write_csv(path, header, rows)


def write_state_csv(path, g: IsoradialGraph, lift: SurfaceLift, state) -> None:
    header = ["vertex", "x", "y", *_lift_columns(g.d), "amount", "odometer"]
    rows = []
    for v in range(g.n_vertices):
        rows.append([v, g.positions[v].real, g.positions[v].imag,
                     *lift.coords[v].tolist(), state.amounts[v], state.odometer[v]])
    write_csv(path, header, rows)


def write_curve_csv(path, curve) -> None:
    d = curve.n_of_v.shape[1]
    header = ["angle", *_lift_columns(d), "radius_rd", "radius_plane"]
    rows = []
    for i in range(len(curve.angles)):
        rows.append([curve.angles[i], *curve.n_of_v[i].tolist(),
                     curve.radius_rd[i], curve.radius_plane[i]])
    write_csv(path, header, rows)


def write_radii_csv(path, report) -> None:
    d = report.directions.shape[1]
    header = ["angle", "count", "r_lift_min", "r_lift_max",
              "r_plane_min", "r_plane_max", *_lift_columns(d)]
    rows = []
    for i in range(len(report.angles)):
        rows.append([report.angles[i], report.counts[i],
                     report.r_lift_min[i], report.r_lift_max[i],
                     report.r_plane_min[i], report.r_plane_max[i],
                     *report.directions[i].tolist()])
    write_csv(path, header, rows)
