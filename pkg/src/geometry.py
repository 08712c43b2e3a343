"""Spatial predicates, convex hulls and the accumulated fence.

Predicates are exact: shapely's relate operations use robust orientation tests, so no
epsilon is applied anywhere in this module.
"""

from collections.abc import Callable, Iterable
from functools import lru_cache

from shapely.geometry import LineString, MultiPoint, Polygon
from shapely.geometry import Point as ShapelyPoint
from shapely.geometry.base import BaseGeometry
from shapely.geometry.polygon import orient

from src.errors import DegenerateInput
from src.models import ConvexPolygon, Envelope, Itinerary, Point, Predicate, Segment

FenceFunction = Callable[[Point], ConvexPolygon]


def envelope_contains(e: Envelope, pt: Point) -> bool:
    """Closed membership test: boundary points are inside."""
    return e.min.x <= pt.x <= e.max.x and e.min.y <= pt.y <= e.max.y


@lru_cache(maxsize=16384)
def _polygon_shape(f: ConvexPolygon) -> Polygon:
    return Polygon([v.as_tuple() for v in f.vertices])


def _hop_shape(seg: Segment) -> BaseGeometry:
    if seg.is_degenerate:
        return ShapelyPoint(seg.start.as_tuple())
    return LineString([seg.start.as_tuple(), seg.end.as_tuple()])


def _hop_relation(seg: Segment, f: ConvexPolygon) -> tuple[bool, bool, bool]:
    """Return (has a point strictly inside f, has a point strictly outside f, touches f)."""
    poly = _polygon_shape(f)
    hop = _hop_shape(seg)
    if not poly.intersects(hop):
        return False, True, False
    strictly_inside = poly.relate_pattern(hop, "T********")
    strictly_outside = not poly.covers(hop)
    return strictly_inside, strictly_outside, True


def _decide(p: Predicate, inside: bool, outside: bool, touches: bool) -> bool:
    if p is Predicate.CROSS:
        return inside and outside
    if p is Predicate.COVER:
        return not outside
    return touches


def eval_predicate(p: Predicate, seg: Segment, f: ConvexPolygon) -> bool:
    """Evaluate a spatial predicate between one hop and a fence.

    Cross needs a point strictly inside and a point strictly outside, so a hop that only
    grazes the boundary does not cross. Cover accepts boundary points. Overlap counts any
    contact.
    """
    return _decide(p, *_hop_relation(seg, f))


def eval_itinerary(p: Predicate, iti: Itinerary, f: ConvexPolygon) -> bool:
    """Evaluate a predicate between a whole itinerary (as a polyline) and a fence."""
    inside = outside = touches = False
    for hop in iti.hops():
        hop_inside, hop_outside, hop_touches = _hop_relation(hop, f)
        inside |= hop_inside
        outside |= hop_outside
        touches |= hop_touches
    return _decide(p, inside, outside, touches)


def polygon_contains(f: ConvexPolygon, pt: Point) -> bool:
    """Closed point-in-polygon test."""
    return _polygon_shape(f).covers(ShapelyPoint(pt.as_tuple()))


def _cross(o: tuple[float, float], a: tuple[float, float], b: tuple[float, float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(pts: Iterable[Point]) -> ConvexPolygon:
    """Minimal convex polygon around the points, CCW, collinear boundary points dropped.

    The first vertex is the lowest one (ties broken by x), so the result does not depend
    on the input order.

    Raises:
        DegenerateInput: fewer than three distinct points, or all of them collinear
    """
    distinct = {pt.as_tuple() for pt in pts}
    if len(distinct) < 3:
        raise DegenerateInput(f"convex hull needs 3 distinct points, got {len(distinct)}")

    hull = MultiPoint(sorted(distinct)).convex_hull
    if hull.geom_type != "Polygon":
        raise DegenerateInput("all points are collinear")

    ring = list(orient(hull, sign=1.0).exterior.coords)[:-1]
    changed = True
    while changed and len(ring) > 3:
        changed = False
        for i in range(len(ring)):
            if _cross(ring[i - 1], ring[i], ring[(i + 1) % len(ring)]) == 0:
                del ring[i]
                changed = True
                break

    start = min(range(len(ring)), key=lambda i: (ring[i][1], ring[i][0]))
    ring = ring[start:] + ring[:start]
    return ConvexPolygon(vertices=tuple(Point(x=x, y=y) for x, y in ring))


def fence_at(center: Point, side: float, offset: Point | None = None) -> ConvexPolygon:
    """Square fence of the given side around `center`, optionally shifted by `offset`."""
    if offset is not None:
        center = center + offset
    return ConvexPolygon.square(center, side)


def accumulated_fence(iti: Itinerary, fence_fn: FenceFunction) -> ConvexPolygon:
    """Convex hull of the fences held at every recorded location of the itinerary."""
    vertices = [v for pt in iti.points for v in fence_fn(pt).vertices]
    return convex_hull(vertices)
