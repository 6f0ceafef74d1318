"""Document/area/topic graph with planar spatial predicates.

Classified restriction sentences become edges from topic nodes (or the
generic topic node when no topic applies) to document nodes; documents
link to the areas they regulate. Map queries walk these adjacencies.
Coordinates are planar (projected CRS); all predicates are exact
enough for desk-scale fixtures and verified against brute-force
oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .fileio import atomic_write_json, read_json
from .labels import DEFAULT_SCHEMA, GENERIC_TOPIC, LabelSchema
from .ocr_ingest import DocumentMeta

POINT = "point"
LINE = "line"
POLYGON = "polygon"
MULTIPOLYGON = "multipolygon"

_GEOJSON_KINDS = {
    "Point": POINT,
    "LineString": LINE,
    "Polygon": POLYGON,
    "MultiPolygon": MULTIPOLYGON,
}
_KIND_GEOJSON = {v: k for k, v in _GEOJSON_KINDS.items()}


class GeoError(ValueError):
    pass


def _check_ring(ring: Sequence[Sequence[float]]) -> tuple[tuple[float, float], ...]:
    pts = tuple((float(x), float(y)) for x, y in ring)
    if len(pts) < 4 or pts[0] != pts[-1]:
        raise GeoError(f"ring must be closed with >= 3 distinct vertices, got {len(pts)} points")
    if len(set(pts[:-1])) < 3:
        raise GeoError("degenerate ring: fewer than 3 distinct vertices")
    return pts


@dataclass(frozen=True)
class Geometry:
    """Planar geometry; polygon rings are closed (first point repeated)."""

    kind: str
    coordinates: tuple

    @classmethod
    def point(cls, x: float, y: float) -> "Geometry":
        return cls(POINT, (float(x), float(y)))

    @classmethod
    def line(cls, points: Sequence[Sequence[float]]) -> "Geometry":
        pts = tuple((float(x), float(y)) for x, y in points)
        if len(pts) < 2:
            raise GeoError("line needs at least 2 points")
        return cls(LINE, pts)

    @classmethod
    def polygon(cls, rings: Sequence[Sequence[Sequence[float]]]) -> "Geometry":
        if not rings:
            raise GeoError("polygon needs at least one ring")
        return cls(POLYGON, tuple(_check_ring(r) for r in rings))

    @classmethod
    def multipolygon(cls, polys: Sequence[Sequence[Sequence[Sequence[float]]]]) -> "Geometry":
        if not polys:
            raise GeoError("multipolygon needs at least one polygon")
        return cls(
            MULTIPOLYGON,
            tuple(tuple(_check_ring(r) for r in poly) for poly in polys),
        )

    @classmethod
    def from_geojson(cls, obj: Mapping) -> "Geometry":
        kind = _GEOJSON_KINDS.get(obj.get("type"))
        if kind is None:
            raise GeoError(f"unsupported geometry type {obj.get('type')!r}")
        coords = obj["coordinates"]
        if kind == POINT:
            return cls.point(coords[0], coords[1])
        if kind == LINE:
            return cls.line(coords)
        if kind == POLYGON:
            return cls.polygon(coords)
        return cls.multipolygon(coords)

    def to_geojson(self) -> dict:
        if self.kind == POINT:
            coords: object = list(self.coordinates)
        elif self.kind == LINE:
            coords = [list(p) for p in self.coordinates]
        elif self.kind == POLYGON:
            coords = [[list(p) for p in ring] for ring in self.coordinates]
        else:
            coords = [
                [[list(p) for p in ring] for ring in poly] for poly in self.coordinates
            ]
        return {"type": _KIND_GEOJSON[self.kind], "coordinates": coords}

    def polygons(self) -> tuple[tuple[tuple[tuple[float, float], ...], ...], ...]:
        if self.kind == POLYGON:
            return (self.coordinates,)
        if self.kind == MULTIPOLYGON:
            return self.coordinates
        return ()

    def vertices(self) -> list[tuple[float, float]]:
        if self.kind == POINT:
            return [self.coordinates]
        if self.kind == LINE:
            return list(self.coordinates)
        out = []
        for poly in self.polygons():
            for ring in poly:
                out.extend(ring[:-1])
        return out

    def segments(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        segs = []
        if self.kind == LINE:
            pts = self.coordinates
            segs.extend((pts[i], pts[i + 1]) for i in range(len(pts) - 1))
        for poly in self.polygons():
            for ring in poly:
                segs.extend((ring[i], ring[i + 1]) for i in range(len(ring) - 1))
        return segs

    def bbox(self) -> tuple[float, float, float, float]:
        vs = self.vertices()
        xs = [v[0] for v in vs]
        ys = [v[1] for v in vs]
        return min(xs), min(ys), max(xs), max(ys)


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(p, a, b) -> bool:
    if _orient(a, b, p) != 0.0:
        return False
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def _segments_intersect(p1, p2, p3, p4) -> bool:
    o1 = _orient(p1, p2, p3)
    o2 = _orient(p1, p2, p4)
    o3 = _orient(p3, p4, p1)
    o4 = _orient(p3, p4, p2)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0:
        return True
    if o1 == 0 and _on_segment(p3, p1, p2):
        return True
    if o2 == 0 and _on_segment(p4, p1, p2):
        return True
    if o3 == 0 and _on_segment(p1, p3, p4):
        return True
    if o4 == 0 and _on_segment(p2, p3, p4):
        return True
    return False


def point_in_polygon(p: Sequence[float], polygon: Geometry) -> bool:
    """Even-odd ray casting; points on the boundary count as inside."""
    polys = polygon.polygons()
    if not polys:
        raise GeoError(f"point_in_polygon needs a polygon, got {polygon.kind}")
    px, py = float(p[0]), float(p[1])
    for poly in polys:
        for ring in poly:
            if len(ring) < 4:
                raise GeoError("degenerate polygon ring")
        # a restriction on the fence line still applies: boundary hits first
        for a, b in [(ring[i], ring[i + 1]) for ring in poly for i in range(len(ring) - 1)]:
            if _on_segment((px, py), a, b):
                return True
        inside = False
        for ring in poly:
            for i in range(len(ring) - 1):
                (x1, y1), (x2, y2) = ring[i], ring[i + 1]
                if (y1 > py) != (y2 > py):
                    xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                    if px < xint:
                        inside = not inside
        if inside:
            return True
    return False


def _contains_point(geom: Geometry, p: tuple[float, float]) -> bool:
    if geom.kind == POINT:
        return geom.coordinates == p
    if geom.kind == LINE:
        return any(_on_segment(p, a, b) for a, b in geom.segments())
    return point_in_polygon(p, geom)


def _bbox_disjoint(a: Geometry, b: Geometry) -> bool:
    ax0, ay0, ax1, ay1 = a.bbox()
    bx0, by0, bx1, by1 = b.bbox()
    return ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0


def overlaps(a: Geometry, b: Geometry) -> bool:
    """True iff the geometries share any point.

    Any segment pair intersecting, or either geometry containing a
    vertex of the other, counts. The bounding-box prefilter is
    inclusive, so touching geometries are never filtered away.
    """
    if _bbox_disjoint(a, b):
        return False
    segs_a = a.segments()
    segs_b = b.segments()
    for s1 in segs_a:
        for s2 in segs_b:
            if _segments_intersect(s1[0], s1[1], s2[0], s2[1]):
                return True
    if any(_contains_point(a, v) for v in b.vertices()):
        return True
    if any(_contains_point(b, v) for v in a.vertices()):
        return True
    return False


# ---------------------------------------------------------------------------
# Graph model


DOCUMENT = "document"
AREA = "area"
TOPIC = "topic"
GENERIC = "generic_topic"


@dataclass(frozen=True)
class AreaFeature:
    area_id: str
    category: str
    properties: dict
    geometry: Geometry


@dataclass(frozen=True)
class ClassifiedSentence:
    sentence_id: str
    doc_id: str
    restriction_type: str
    topics: tuple[str, ...]
    confidence: float
    text: str


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    kind: str
    payload: dict


@dataclass(frozen=True)
class RestrictionEdge:
    from_node: str  # topic or generic node id
    to_node: str  # document node id
    sentence_id: str
    sentence_text: str
    restriction_type: str
    confidence: float
    topic: str  # topic label or the generic marker


@dataclass(frozen=True)
class AreaDocEdge:
    from_node: str  # document node id
    to_node: str  # area node id


def _doc_node(doc_id: str) -> str:
    return f"doc:{doc_id}"


def _area_node(area_id: str) -> str:
    return f"area:{area_id}"


def _topic_node(topic: str) -> str:
    return f"topic:{topic}"


@dataclass
class Graph:
    nodes: dict[str, GraphNode] = field(default_factory=dict)
    restriction_edges: list[RestrictionEdge] = field(default_factory=list)
    area_doc_edges: list[AreaDocEdge] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def doc_ids(self) -> list[str]:
        return sorted(
            n.payload["doc_id"] for n in self.nodes.values() if n.kind == DOCUMENT
        )

    def area_ids(self) -> list[str]:
        return sorted(
            n.payload["area_id"] for n in self.nodes.values() if n.kind == AREA
        )

    def area(self, area_id: str) -> GraphNode:
        node = self.nodes.get(_area_node(area_id))
        if node is None:
            raise GeoError(f"unknown area {area_id!r}")
        return node

    def document(self, doc_id: str) -> GraphNode:
        node = self.nodes.get(_doc_node(doc_id))
        if node is None:
            raise GeoError(f"unknown document {doc_id!r}")
        return node

    def area_geometry(self, area_id: str) -> Geometry:
        return Geometry.from_geojson(self.area(area_id).payload["geometry"])

    def docs_of_area(self, area_id: str) -> list[str]:
        self.area(area_id)
        node = _area_node(area_id)
        return sorted(
            e.from_node.split(":", 1)[1]
            for e in self.area_doc_edges
            if e.to_node == node
        )

    def areas_of_doc(self, doc_id: str) -> list[str]:
        node = _doc_node(doc_id)
        return sorted(
            e.to_node.split(":", 1)[1]
            for e in self.area_doc_edges
            if e.from_node == node
        )


def build_graph(
    docs: Sequence[DocumentMeta],
    areas: Sequence[AreaFeature],
    classified: Sequence[ClassifiedSentence],
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> Graph:
    """Assemble the full graph; input references must resolve."""
    graph = Graph()
    for topic in schema.topics:
        nid = _topic_node(topic)
        graph.nodes[nid] = GraphNode(nid, TOPIC, {"label": topic})
    generic_id = _topic_node(GENERIC_TOPIC)
    graph.nodes[generic_id] = GraphNode(generic_id, GENERIC, {"label": GENERIC_TOPIC})

    for meta in docs:
        nid = _doc_node(meta.doc_id)
        if nid in graph.nodes:
            raise GeoError(f"duplicate document {meta.doc_id!r}")
        graph.nodes[nid] = GraphNode(
            nid,
            DOCUMENT,
            {
                "doc_id": meta.doc_id,
                "title": meta.title,
                "region": meta.region,
                "area_ids": list(meta.area_ids),
            },
        )
    for feat in areas:
        nid = _area_node(feat.area_id)
        if nid in graph.nodes:
            raise GeoError(f"duplicate area {feat.area_id!r}")
        graph.nodes[nid] = GraphNode(
            nid,
            AREA,
            {
                "area_id": feat.area_id,
                "category": feat.category,
                "properties": dict(feat.properties),
                "geometry": feat.geometry.to_geojson(),
            },
        )

    dangling = sorted({c.doc_id for c in classified} - {m.doc_id for m in docs})
    if dangling:
        raise GeoError(f"classified sentences reference unknown documents: {dangling}")

    restriction_labels = set(schema.restrictions)
    for c in classified:
        if c.restriction_type not in restriction_labels:
            raise GeoError(
                f"sentence {c.sentence_id!r} has restriction type {c.restriction_type!r}"
            )
        if not 0.0 <= c.confidence <= 1.0:
            raise GeoError(f"confidence {c.confidence} for {c.sentence_id!r} outside [0,1]")
        topics = c.topics if c.topics else (GENERIC_TOPIC,)
        for topic in topics:
            if topic != GENERIC_TOPIC and topic not in schema.topics:
                raise GeoError(f"unknown topic {topic!r} on {c.sentence_id!r}")
            graph.restriction_edges.append(
                RestrictionEdge(
                    from_node=_topic_node(topic),
                    to_node=_doc_node(c.doc_id),
                    sentence_id=c.sentence_id,
                    sentence_text=c.text,
                    restriction_type=c.restriction_type,
                    confidence=float(c.confidence),
                    topic=topic,
                )
            )

    for meta in docs:
        for area_id in meta.area_ids:
            if _area_node(area_id) not in graph.nodes:
                graph.warnings.append(
                    f"document {meta.doc_id} references unknown area {area_id}"
                )
                continue
            graph.area_doc_edges.append(
                AreaDocEdge(_doc_node(meta.doc_id), _area_node(area_id))
            )
    return graph


def restrictions_by_area(
    graph: Graph, area_id: str, schema: LabelSchema = DEFAULT_SCHEMA
) -> dict[str, list[dict]]:
    """Restriction entries for one area, grouped and confidence-sorted."""
    doc_nodes = { _doc_node(d) for d in graph.docs_of_area(area_id) }
    groups: dict[str, list[dict]] = {label: [] for label in schema.restrictions}
    for e in graph.restriction_edges:
        if e.to_node not in doc_nodes:
            continue
        doc = graph.nodes[e.to_node].payload
        groups[e.restriction_type].append(
            {
                "doc_id": doc["doc_id"],
                "title": doc["title"],
                "sentence_id": e.sentence_id,
                "sentence": e.sentence_text,
                "topic": e.topic,
                "confidence": e.confidence,
            }
        )
    for entries in groups.values():
        entries.sort(key=lambda r: (-r["confidence"], r["sentence_id"], r["topic"]))
    return groups


def similar_areas(
    graph: Graph, topic: str, schema: LabelSchema = DEFAULT_SCHEMA
) -> set[str]:
    """Areas carrying at least one restriction edge under the topic."""
    if topic != GENERIC_TOPIC and topic not in schema.topics:
        raise GeoError(f"unknown topic {topic!r}")
    node = _topic_node(topic)
    out: set[str] = set()
    for e in graph.restriction_edges:
        if e.from_node != node:
            continue
        doc_id = e.to_node.split(":", 1)[1]
        out.update(graph.areas_of_doc(doc_id))
    return out


def weather_overlay(
    graph: Graph,
    area_id: str,
    isobands: Sequence[tuple[Geometry, float]],
) -> list[float]:
    """Band values of all isobands overlapping the area, heaviest first."""
    geom = graph.area_geometry(area_id)
    hits = [value for band, value in isobands if overlaps(geom, band)]
    return sorted(hits, reverse=True)


# ---------------------------------------------------------------------------
# GeoJSON and graph persistence


def load_areas(path: str | Path) -> list[AreaFeature]:
    obj = read_json(path)
    features = []
    for feat in obj.get("features", []):
        props = dict(feat.get("properties", {}))
        area_id = props.pop("area_id", None)
        if area_id is None:
            raise GeoError(f"{path}: feature without area_id property")
        features.append(
            AreaFeature(
                area_id=str(area_id),
                category=str(props.pop("category", "")),
                properties=props,
                geometry=Geometry.from_geojson(feat["geometry"]),
            )
        )
    return features


def load_isobands(path: str | Path) -> list[tuple[Geometry, float]]:
    obj = read_json(path)
    bands = []
    for feat in obj.get("features", []):
        props = feat.get("properties", {})
        if "band_value" not in props:
            raise GeoError(f"{path}: isoband feature without band_value")
        bands.append(
            (Geometry.from_geojson(feat["geometry"]), float(props["band_value"]))
        )
    return bands


def areas_geojson(graph: Graph) -> dict:
    features = []
    for area_id in graph.area_ids():
        payload = graph.area(area_id).payload
        props = {"area_id": area_id, "category": payload["category"]}
        props.update(payload["properties"])
        features.append(
            {"type": "Feature", "properties": props, "geometry": payload["geometry"]}
        )
    return {"type": "FeatureCollection", "features": features}


def save_graph(graph: Graph, path: str | Path) -> None:
    obj = {
        "nodes": [
            {"node_id": n.node_id, "kind": n.kind, "payload": n.payload}
            for n in sorted(graph.nodes.values(), key=lambda n: n.node_id)
        ],
        "restriction_edges": [
            {
                "from": e.from_node,
                "to": e.to_node,
                "sentence_id": e.sentence_id,
                "sentence_text": e.sentence_text,
                "restriction_type": e.restriction_type,
                "confidence": e.confidence,
                "topic": e.topic,
            }
            for e in graph.restriction_edges
        ],
        "area_doc_edges": [
            {"from": e.from_node, "to": e.to_node} for e in graph.area_doc_edges
        ],
        "warnings": graph.warnings,
    }
    atomic_write_json(obj, path)


def load_graph(path: str | Path) -> Graph:
    obj = read_json(path)
    graph = Graph()
    for n in obj["nodes"]:
        graph.nodes[n["node_id"]] = GraphNode(n["node_id"], n["kind"], n["payload"])
    for e in obj["restriction_edges"]:
        graph.restriction_edges.append(
            RestrictionEdge(
                from_node=e["from"],
                to_node=e["to"],
                sentence_id=e["sentence_id"],
                sentence_text=e["sentence_text"],
                restriction_type=e["restriction_type"],
                confidence=float(e["confidence"]),
                topic=e["topic"],
            )
        )
    for e in obj["area_doc_edges"]:
        graph.area_doc_edges.append(AreaDocEdge(e["from"], e["to"]))
    graph.warnings = list(obj.get("warnings", []))
    return graph
