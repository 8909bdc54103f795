//! Accelerated geometric queries over the boundary polylines.

use std::collections::HashMap;

use thiserror::Error;

use crate::math::{Rect, Vec2};
use crate::scene::{BoundaryKind, Scene};

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("scene has no boundary segments")]
    EmptyScene,
    #[error("star radius is unbounded at ({0}, {1}): no Dirichlet boundary and no silhouette")]
    UnboundedStar(f64, f64),
}

/// Which boundary kinds a query considers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KindSet {
    pub dirichlet: bool,
    pub neumann: bool,
}

impl KindSet {
    pub const DIRICHLET: KindSet = KindSet {
        dirichlet: true,
        neumann: false,
    };
    pub const NEUMANN: KindSet = KindSet {
        dirichlet: false,
        neumann: true,
    };
    pub const ALL: KindSet = KindSet {
        dirichlet: true,
        neumann: true,
    };

    pub fn contains(&self, kind: BoundaryKind) -> bool {
        match kind {
            BoundaryKind::Dirichlet => self.dirichlet,
            BoundaryKind::Neumann => self.neumann,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    a: Vec2,
    b: Vec2,
    kind: BoundaryKind,
}

impl Segment {
    fn bounds(&self) -> Rect {
        Rect::new(self.a.min(self.b), self.a.max(self.b))
    }

    fn centroid(&self) -> Vec2 {
        (self.a + self.b) * 0.5
    }
}

/// Closest point on segment `[a, b]` to `x`.
#[inline]
pub fn closest_point_on_segment(a: Vec2, b: Vec2, x: Vec2) -> Vec2 {
    let e = b - a;
    let t = ((x - a).dot(e) / e.length_squared()).clamp(0.0, 1.0);
    a + e * t
}

/// Ray/segment intersection distance `t`, if any (parallel segments never hit).
#[inline]
pub fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom == 0.0 {
        return None;
    }
    let ao = a - origin;
    let t = ao.cross(e) / denom;
    let s = ao.cross(dir) / denom;
    if (0.0..=1.0).contains(&s) {
        Some(t)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bbox: Rect,
    /// Leaf: first primitive; interior: index of the right child (left is `self + 1`).
    offset: u32,
    /// Number of primitives; zero for interior nodes.
    count: u32,
}

const LEAF_SIZE: usize = 4;

/// Bounding volume hierarchy over a subset of primitives, split at the centroid median.
#[derive(Clone, Debug, Default)]
pub struct Bvh {
    nodes: Vec<Node>,
    prims: Vec<u32>,
}

impl Bvh {
    fn build(ids: Vec<u32>, bounds: &dyn Fn(u32) -> Rect, centroid: &dyn Fn(u32) -> Vec2) -> Bvh {
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * ids.len() / LEAF_SIZE + 1),
            prims: ids,
        };
        if !bvh.prims.is_empty() {
            let n = bvh.prims.len();
            bvh.build_node(0, n, bounds, centroid);
        }
        bvh
    }

    fn build_node(
        &mut self,
        start: usize,
        end: usize,
        bounds: &dyn Fn(u32) -> Rect,
        centroid: &dyn Fn(u32) -> Vec2,
    ) -> usize {
        let mut bbox = Rect::empty();
        let mut cbox = Rect::empty();
        for &p in &self.prims[start..end] {
            bbox = bbox.union(&bounds(p));
            cbox.grow(centroid(p));
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            bbox,
            offset: start as u32,
            count: (end - start) as u32,
        });
        if end - start <= LEAF_SIZE {
            return idx;
        }
        let ext = cbox.extent();
        let axis_x = ext.x >= ext.y;
        let key = |p: u32| {
            let c = centroid(p);
            if axis_x {
                c.x
            } else {
                c.y
            }
        };
        let mid = start + (end - start) / 2;
        // Stable tie-breaking by id keeps the build deterministic.
        self.prims[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            key(a).total_cmp(&key(b)).then(a.cmp(&b))
        });
        self.build_node(start, mid, bounds, centroid);
        let right = self.build_node(mid, end, bounds, centroid);
        self.nodes[idx].offset = right as u32;
        self.nodes[idx].count = 0;
        idx
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    pub fn root_bounds(&self) -> Option<Rect> {
        self.nodes.first().map(|n| n.bbox)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Visits leaves in near-first order, pruning nodes whose squared box
    /// distance is not below the running bound.
    #[inline]
    fn nearest<F: FnMut(u32) -> Option<f64>>(
        &self,
        x: Vec2,
        mut best_d2: f64,
        mut visit: F,
    ) -> f64 {
        if self.nodes.is_empty() {
            return best_d2;
        }
        let mut stack = [0u32; 64];
        let mut sp = 0;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let ni = stack[sp] as usize;
            let node = &self.nodes[ni];
            if node.bbox.distance_squared(x) >= best_d2 {
                continue;
            }
            if node.count > 0 {
                let s = node.offset as usize;
                for &p in &self.prims[s..s + node.count as usize] {
                    if let Some(d2) = visit(p) {
                        if d2 < best_d2 {
                            best_d2 = d2;
                        }
                    }
                }
            } else {
                let l = ni + 1;
                let r = node.offset as usize;
                let dl = self.nodes[l].bbox.distance_squared(x);
                let dr = self.nodes[r].bbox.distance_squared(x);
                // push far child first
                let (first, second) = if dl <= dr { (r, l) } else { (l, r) };
                stack[sp] = first as u32;
                stack[sp + 1] = second as u32;
                sp += 2;
            }
        }
        best_d2
    }
}

/// Result of a closest-point query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec2,
    pub distance: f64,
    pub segment: usize,
}

/// First intersection of a ray with the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitInfo {
    pub t: f64,
    pub point: Vec2,
    /// Unit normal facing the ray origin's side.
    pub normal: Vec2,
    pub segment: usize,
    pub kind: BoundaryKind,
}

/// A Neumann polyline vertex with the information needed for silhouette tests.
#[derive(Clone, Copy, Debug)]
struct NeumannVertex {
    p: Vec2,
    /// Normals of the two incident segments, oriented consistently along the
    /// polyline; `None` for open ends and junctions (always silhouettes).
    normals: Option<(Vec2, Vec2)>,
}

impl NeumannVertex {
    #[inline]
    fn is_silhouette(&self, x: Vec2) -> bool {
        match self.normals {
            None => true,
            Some((n0, n1)) => {
                let v = self.p - x;
                n0.dot(v) * n1.dot(v) < 0.0
            }
        }
    }
}

/// Tunable query tolerances.
#[derive(Clone, Copy, Debug)]
pub struct GeomConfig {
    /// Rays ignore intersections at `t <= t_epsilon`.
    pub t_epsilon: f64,
}

/// Immutable acceleration structure for all boundary queries.
#[derive(Clone, Debug)]
pub struct Accel {
    segments: Vec<Segment>,
    dirichlet: Bvh,
    neumann: Bvh,
    vertices: Vec<NeumannVertex>,
    vertex_bvh: Bvh,
    bbox: Rect,
    config: GeomConfig,
}

impl Accel {
    /// Builds the hierarchy with the default ray guard of `1e-6` times the bbox diagonal.
    pub fn build(scene: &Scene) -> Result<Accel, GeomError> {
        let config = GeomConfig {
            t_epsilon: 1e-12 * scene.bbox().diagonal(),
        };
        Accel::build_with(scene, config)
    }

    pub fn build_with(scene: &Scene, config: GeomConfig) -> Result<Accel, GeomError> {
        if scene.segments().is_empty() {
            return Err(GeomError::EmptyScene);
        }
        let segments: Vec<Segment> = scene
            .segments()
            .iter()
            .map(|s| Segment {
                a: s.a,
                b: s.b,
                kind: s.kind,
            })
            .collect();
        let ids_of = |kind| {
            segments
                .iter()
                .enumerate()
                .filter(|(_, s)| s.kind == kind)
                .map(|(i, _)| i as u32)
                .collect::<Vec<_>>()
        };
        let seg_bounds = |i: u32| segments[i as usize].bounds();
        let seg_centroid = |i: u32| segments[i as usize].centroid();
        let dirichlet = Bvh::build(ids_of(BoundaryKind::Dirichlet), &seg_bounds, &seg_centroid);
        let neumann = Bvh::build(ids_of(BoundaryKind::Neumann), &seg_bounds, &seg_centroid);
        let vertices = neumann_vertices(&segments);
        let vertex_bvh = Bvh::build(
            (0..vertices.len() as u32).collect(),
            &|i| Rect::new(vertices[i as usize].p, vertices[i as usize].p),
            &|i| vertices[i as usize].p,
        );
        Ok(Accel {
            segments,
            dirichlet,
            neumann,
            vertices,
            vertex_bvh,
            bbox: scene.bbox(),
            config,
        })
    }

    pub fn config(&self) -> GeomConfig {
        self.config
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn has_dirichlet(&self) -> bool {
        !self.dirichlet.is_empty()
    }

    pub fn has_neumann(&self) -> bool {
        !self.neumann.is_empty()
    }

    /// Per-kind hierarchies, for inspection and tests.
    pub fn bvh(&self, kind: BoundaryKind) -> &Bvh {
        match kind {
            BoundaryKind::Dirichlet => &self.dirichlet,
            BoundaryKind::Neumann => &self.neumann,
        }
    }

    /// Bounds of everything in the hierarchies.
    pub fn root_bounds(&self) -> Rect {
        let mut r = Rect::empty();
        for b in [&self.dirichlet, &self.neumann] {
            if let Some(bb) = b.root_bounds() {
                r = r.union(&bb);
            }
        }
        r
    }

    /// Checks the containment and coverage invariants of every hierarchy.
    pub fn validate(&self) -> bool {
        let check = |bvh: &Bvh, bounds: &dyn Fn(u32) -> Rect, expected: &[u32]| {
            let mut seen = Vec::new();
            let ok = check_node(bvh, 0, bounds, &mut seen);
            seen.sort_unstable();
            let mut exp = expected.to_vec();
            exp.sort_unstable();
            ok && seen == exp
        };
        let seg_bounds = |i: u32| self.segments[i as usize].bounds();
        let ids = |kind| {
            (0..self.segments.len() as u32)
                .filter(|&i| self.segments[i as usize].kind == kind)
                .collect::<Vec<_>>()
        };
        check(&self.dirichlet, &seg_bounds, &ids(BoundaryKind::Dirichlet))
            && check(&self.neumann, &seg_bounds, &ids(BoundaryKind::Neumann))
            && check(
                &self.vertex_bvh,
                &|i| Rect::new(self.vertices[i as usize].p, self.vertices[i as usize].p),
                &(0..self.vertices.len() as u32).collect::<Vec<_>>(),
            )
    }

    fn closest_in(&self, bvh: &Bvh, x: Vec2, best: &mut Option<ClosestPoint>) {
        let mut best_d2 = best.map_or(f64::INFINITY, |b| b.distance * b.distance);
        let mut found = *best;
        bvh.nearest(x, best_d2, |i| {
            let s = &self.segments[i as usize];
            let p = closest_point_on_segment(s.a, s.b, x);
            let d2 = (p - x).length_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                found = Some(ClosestPoint {
                    point: p,
                    distance: d2.sqrt(),
                    segment: i as usize,
                });
            }
            Some(d2)
        });
        *best = found;
    }

    /// Nearest boundary point among the requested kinds; `None` when no
    /// segment of those kinds exists (infinite distance).
    pub fn closest_point(&self, x: Vec2, kinds: KindSet) -> Option<ClosestPoint> {
        let mut best = None;
        if kinds.dirichlet {
            self.closest_in(&self.dirichlet, x, &mut best);
        }
        if kinds.neumann {
            self.closest_in(&self.neumann, x, &mut best);
        }
        best
    }

    /// Distance to the nearest Dirichlet point, `INFINITY` if there is none.
    pub fn dirichlet_distance(&self, x: Vec2) -> f64 {
        self.closest_point(x, KindSet::DIRICHLET)
            .map_or(f64::INFINITY, |c| c.distance)
    }

    /// Distance from `x` to the nearest Neumann silhouette vertex, `INFINITY` if none.
    pub fn closest_silhouette(&self, x: Vec2) -> f64 {
        let mut best_d2 = f64::INFINITY;
        self.vertex_bvh.nearest(x, f64::INFINITY, |i| {
            let v = &self.vertices[i as usize];
            let d2 = (v.p - x).length_squared();
            if d2 < best_d2 && v.is_silhouette(x) {
                best_d2 = d2;
                Some(d2)
            } else {
                None
            }
        });
        best_d2.sqrt()
    }

    /// Nearest intersection with `t` in `(t_epsilon, t_max]`.
    pub fn ray_first_hit(
        &self,
        origin: Vec2,
        dir: Vec2,
        t_max: f64,
        kinds: KindSet,
    ) -> Option<HitInfo> {
        self.ray_first_hit_excluding(origin, dir, t_max, kinds, None)
    }

    /// Like `ray_first_hit`, ignoring segment `exclude` (the one a boundary point sits on).
    pub fn ray_first_hit_excluding(
        &self,
        origin: Vec2,
        dir: Vec2,
        t_max: f64,
        kinds: KindSet,
        exclude: Option<usize>,
    ) -> Option<HitInfo> {
        let skip = exclude.map_or(u32::MAX, |e| e as u32);
        let mut best: Option<(f64, u32)> = None;
        let mut t_best = t_max;
        let inv = Vec2::new(1.0 / dir.x, 1.0 / dir.y);
        let t_eps = self.config.t_epsilon;
        for (enabled, bvh) in [
            (kinds.dirichlet, &self.dirichlet),
            (kinds.neumann, &self.neumann),
        ] {
            if !enabled || bvh.nodes.is_empty() {
                continue;
            }
            let mut stack = [0u32; 64];
            let mut sp = 1;
            while sp > 0 {
                sp -= 1;
                let ni = stack[sp] as usize;
                let node = &bvh.nodes[ni];
                if node.bbox.ray_entry(origin, inv, t_best).is_none() {
                    continue;
                }
                if node.count > 0 {
                    let s = node.offset as usize;
                    for &p in &bvh.prims[s..s + node.count as usize] {
                        if p == skip {
                            continue;
                        }
                        let seg = &self.segments[p as usize];
                        if let Some(t) = ray_segment(origin, dir, seg.a, seg.b) {
                            if t > t_eps && t <= t_best {
                                // equal t: prefer the lower id for determinism
                                if t < t_best || best.is_none_or(|(_, q)| p < q) {
                                    t_best = t;
                                    best = Some((t, p));
                                }
                            }
                        }
                    }
                } else {
                    let l = ni + 1;
                    let r = node.offset as usize;
                    let tl = bvh.nodes[l].bbox.ray_entry(origin, inv, t_best);
                    let tr = bvh.nodes[r].bbox.ray_entry(origin, inv, t_best);
                    match (tl, tr) {
                        (Some(a), Some(b)) => {
                            let (near, far) = if a <= b { (l, r) } else { (r, l) };
                            stack[sp] = far as u32;
                            stack[sp + 1] = near as u32;
                            sp += 2;
                        }
                        (Some(_), None) => {
                            stack[sp] = l as u32;
                            sp += 1;
                        }
                        (None, Some(_)) => {
                            stack[sp] = r as u32;
                            sp += 1;
                        }
                        (None, None) => {}
                    }
                }
            }
        }
        best.map(|(t, id)| {
            let seg = &self.segments[id as usize];
            let mut n = (seg.b - seg.a).perp().normalized();
            if n.dot(dir) > 0.0 {
                n = -n;
            }
            HitInfo {
                t,
                point: origin + dir * t,
                normal: n,
                segment: id as usize,
                kind: seg.kind,
            }
        })
    }

    /// Star radius `min(d_D, max(d_sil, r_min))`.
    pub fn star_radius(&self, x: Vec2, r_min: f64) -> Result<f64, GeomError> {
        star_radius_from(
            self.dirichlet_distance(x),
            self.closest_silhouette(x),
            r_min,
        )
        .ok_or(GeomError::UnboundedStar(x.x, x.y))
    }

    /// Unit normal of a segment (left-hand perpendicular of `b - a`).
    pub fn segment_normal(&self, id: usize) -> Vec2 {
        let s = &self.segments[id];
        (s.b - s.a).perp().normalized()
    }
}

/// Combines the Dirichlet and silhouette distances into a star radius.
pub fn star_radius_from(dist_dirichlet: f64, dist_silhouette: f64, r_min: f64) -> Option<f64> {
    let r = dist_dirichlet.min(dist_silhouette.max(r_min));
    if r.is_finite() {
        Some(r)
    } else {
        None
    }
}

fn check_node(bvh: &Bvh, ni: usize, bounds: &dyn Fn(u32) -> Rect, seen: &mut Vec<u32>) -> bool {
    let Some(node) = bvh.nodes.get(ni) else {
        return bvh.prims.is_empty();
    };
    if node.count > 0 {
        let s = node.offset as usize;
        bvh.prims[s..s + node.count as usize].iter().all(|&p| {
            seen.push(p);
            node.bbox.contains_rect(&bounds(p))
        })
    } else {
        let l = ni + 1;
        let r = node.offset as usize;
        node.bbox.contains_rect(&bvh.nodes[l].bbox)
            && node.bbox.contains_rect(&bvh.nodes[r].bbox)
            && check_node(bvh, l, bounds, seen)
            && check_node(bvh, r, bounds, seen)
    }
}

fn neumann_vertices(segments: &[Segment]) -> Vec<NeumannVertex> {
    let key = |p: Vec2| (p.x.to_bits(), p.y.to_bits());
    // vertex -> (segment id, other endpoint, vertex is the segment's `b`)
    let mut incident: HashMap<(u64, u64), Vec<(usize, Vec2, bool)>> = HashMap::new();
    let mut order = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        if s.kind != BoundaryKind::Neumann {
            continue;
        }
        for (v, other, is_b) in [(s.a, s.b, false), (s.b, s.a, true)] {
            let e = incident.entry(key(v)).or_insert_with(|| {
                order.push(v);
                Vec::new()
            });
            e.push((i, other, is_b));
        }
    }
    order
        .into_iter()
        .map(|v| {
            let inc = &incident[&key(v)];
            let normals = if inc.len() == 2 {
                let (_, o0, _) = inc[0];
                let (_, o1, _) = inc[1];
                // Walk the chain o0 -> v -> o1 so both normals share an orientation.
                Some(((v - o0).perp(), (o1 - v).perp()))
            } else {
                None
            };
            NeumannVertex { p: v, normals }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{load_scene, SceneDoc, SegmentDoc, ValueSpec};
    use std::collections::BTreeMap;

    fn scene_from(segs: &[((f64, f64), (f64, f64), BoundaryKind)]) -> Scene {
        let mut values = BTreeMap::new();
        values.insert("v".to_string(), ValueSpec::Constant { value: 0.0 });
        let mut bbox = Rect::empty();
        for &(a, b, _) in segs {
            bbox.grow(Vec2::new(a.0, a.1));
            bbox.grow(Vec2::new(b.0, b.1));
        }
        bbox.min = bbox.min - Vec2::new(1.0, 1.0);
        bbox.max = bbox.max + Vec2::new(1.0, 1.0);
        Scene::from_doc(SceneDoc {
            bbox,
            epsilon_shell: None,
            values,
            source: Default::default(),
            segments: segs
                .iter()
                .map(|&(a, b, kind)| SegmentDoc {
                    a: Vec2::new(a.0, a.1),
                    b: Vec2::new(b.0, b.1),
                    kind,
                    value: "v".into(),
                })
                .collect(),
        })
        .unwrap()
    }

    use BoundaryKind::{Dirichlet as D, Neumann as N};

    #[test]
    fn square_root_box() {
        let s = scene_from(&[
            ((0.0, 0.0), (1.0, 0.0), D),
            ((1.0, 0.0), (1.0, 1.0), D),
            ((1.0, 1.0), (0.0, 1.0), D),
            ((0.0, 1.0), (0.0, 0.0), D),
        ]);
        let acc = Accel::build(&s).unwrap();
        assert_eq!(
            acc.root_bounds(),
            Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0))
        );
        assert!(acc.validate());
    }

    #[test]
    fn single_segment_is_single_leaf() {
        let s = scene_from(&[((0.0, 0.0), (1.0, 0.0), D)]);
        let acc = Accel::build(&s).unwrap();
        assert_eq!(acc.bvh(D).node_count(), 1);
        assert!(acc.bvh(N).is_empty());
        assert!(acc.validate());
    }

    #[test]
    fn empty_scene_rejected() {
        let s =
            load_scene(r#"{"bbox": {"min": [0,0], "max": [1,1]}, "values": {}, "segments": []}"#)
                .unwrap();
        assert_eq!(Accel::build(&s).unwrap_err(), GeomError::EmptyScene);
    }

    #[test]
    fn closest_point_examples() {
        let s = scene_from(&[((0.0, 0.0), (1.0, 0.0), D)]);
        let acc = Accel::build(&s).unwrap();
        let c = acc
            .closest_point(Vec2::new(0.5, 0.3), KindSet::ALL)
            .unwrap();
        assert!((c.point - Vec2::new(0.5, 0.0)).length() < 1e-15);
        assert!((c.distance - 0.3).abs() < 1e-15);
        let c = acc
            .closest_point(Vec2::new(2.0, 0.0), KindSet::DIRICHLET)
            .unwrap();
        assert_eq!(c.point, Vec2::new(1.0, 0.0));
        assert_eq!(c.distance, 1.0);
        assert!(acc
            .closest_point(Vec2::new(2.0, 0.0), KindSet::NEUMANN)
            .is_none());
    }

    #[test]
    fn silhouette_examples() {
        // convex all-Neumann square, query strictly inside
        let sq = scene_from(&[
            ((0.0, 0.0), (1.0, 0.0), N),
            ((1.0, 0.0), (1.0, 1.0), N),
            ((1.0, 1.0), (0.0, 1.0), N),
            ((0.0, 1.0), (0.0, 0.0), N),
        ]);
        let acc = Accel::build(&sq).unwrap();
        assert_eq!(acc.closest_silhouette(Vec2::new(0.3, 0.6)), f64::INFINITY);
        // a point on an edge does not see its own edge's endpoints as silhouettes
        assert_eq!(acc.closest_silhouette(Vec2::new(0.3, 0.0)), f64::INFINITY);

        // open segment: both endpoints are silhouettes
        let open = scene_from(&[((0.0, 0.0), (1.0, 0.0), N)]);
        let acc = Accel::build(&open).unwrap();
        let d = acc.closest_silhouette(Vec2::new(0.5, 0.3));
        assert!((d - (0.25f64 + 0.09).sqrt()).abs() < 1e-12);
        assert!((d - 0.583095).abs() < 1e-6);

        // L-shape with reflex corner at the origin: (1,0) -> (0,0) -> (0,1) closed by far edges
        let l = scene_from(&[
            ((-1.0, -1.0), (1.0, -1.0), N),
            ((1.0, -1.0), (1.0, 0.0), N),
            ((1.0, 0.0), (0.0, 0.0), N),
            ((0.0, 0.0), (0.0, 1.0), N),
            ((0.0, 1.0), (-1.0, 1.0), N),
            ((-1.0, 1.0), (-1.0, -1.0), N),
        ]);
        let acc = Accel::build(&l).unwrap();
        assert!((acc.closest_silhouette(Vec2::new(0.3, -0.4)) - 0.5).abs() < 1e-12);
        assert!((acc.closest_silhouette(Vec2::new(-0.3, 0.4)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ray_examples() {
        let s = scene_from(&[((0.0, 1.0), (1.0, 1.0), D), ((2.0, 0.0), (3.0, 1.0), N)]);
        let acc = Accel::build(&s).unwrap();
        let h = acc
            .ray_first_hit(Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0), 10.0, KindSet::ALL)
            .unwrap();
        assert!((h.t - 1.0).abs() < 1e-15);
        assert!((h.point - Vec2::new(0.5, 1.0)).length() < 1e-15);
        assert_eq!(h.normal, Vec2::new(0.0, -1.0));
        assert_eq!(h.kind, D);
        // parallel to the diagonal Neumann segment
        let dir = Vec2::new(1.0, 1.0).normalized();
        assert!(acc
            .ray_first_hit(Vec2::new(2.0, -0.5), dir, 10.0, KindSet::NEUMANN)
            .is_none());
        // beyond t_max
        assert!(acc
            .ray_first_hit(Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0), 0.5, KindSet::ALL)
            .is_none());
    }

    #[test]
    fn star_radius_examples() {
        assert_eq!(star_radius_from(0.4, 0.7, 1e-3), Some(0.4));
        assert_eq!(star_radius_from(0.4, 0.05, 0.1), Some(0.1));
        assert_eq!(star_radius_from(f64::INFINITY, 0.3, 1e-3), Some(0.3));
        assert_eq!(star_radius_from(f64::INFINITY, f64::INFINITY, 1e-3), None);
    }
}
