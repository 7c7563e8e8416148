//! Back-end stage and the two ways of driving it: in sequence on one thread,
//! or with the front-end on its own thread feeding an ordered queue.

use std::collections::BTreeMap;
use std::sync::mpsc;

use nalgebra::{Vector3, Vector4, Vector6};
use serde::Serialize;

use super::config::SlamConfig;
use super::frontend::{Frontend, KeyframeEvent};
use super::graph::{DoorNode, Factor, Graph, KeyframeNode, MarkerNode, WallNode};
use super::optimizer::{optimize, OptimizerReport};
use super::scene_graph::{Header, SceneGraph};
use super::semantics::{detect_wall, infer_corridor, infer_room};
use super::SlamError;
use crate::geometry::{marker_world_pose, Pose};
use crate::obslog::{ObservationLog, Record};
use crate::semantic::{ElementKind, PlaceKind, SemanticDb};
use crate::trajectory::{StampedPose, Trajectory};

#[derive(Debug, Clone, Copy)]
struct MarkerTrack {
    last_seen: f64,
    odometer: f64,
    last_kf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlamReport {
    pub keyframes: usize,
    pub markers: usize,
    pub culled_keyframes: usize,
    pub loop_closures: usize,
    pub metric: OptimizerReport,
    /// Second pass including wall and place factors, when any exist.
    pub semantic: Option<OptimizerReport>,
    /// Database markers never observed.
    pub unobserved_markers: Vec<u32>,
    /// Observed markers missing from the database.
    pub unknown_markers: Vec<u32>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SlamOutput {
    pub graph: Graph,
    /// Optimized keyframe poses.
    pub trajectory: Trajectory,
    /// Dead-reckoned keyframe poses before optimization.
    pub initial: Trajectory,
    pub report: SlamReport,
}

impl SlamOutput {
    pub fn scene_graph(&self, header: Header) -> SceneGraph {
        SceneGraph::from_graph(&self.graph, header)
    }
}

/// Owns the graph. Consumes keyframe events, then optimizes on `finish`.
pub struct Backend<'a> {
    config: SlamConfig,
    db: Option<&'a SemanticDb>,
    graph: Graph,
    tracks: BTreeMap<u32, MarkerTrack>,
    kf_markers: Vec<Vec<u32>>,
    initial: Vec<StampedPose>,
    loop_closures: usize,
}

impl<'a> Backend<'a> {
    pub fn new(config: &SlamConfig, db: Option<&'a SemanticDb>) -> Result<Self, SlamError> {
        config.validate()?;
        Ok(Self {
            graph: Graph::new(config.extrinsic_pose()?),
            config: config.clone(),
            db,
            tracks: BTreeMap::new(),
            kf_markers: Vec::new(),
            initial: Vec::new(),
            loop_closures: 0,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Immutable view of the current map.
    pub fn snapshot(&self, header: Header) -> SceneGraph {
        SceneGraph::from_graph(&self.graph, header)
    }

    fn odometry_info(&self, steps: usize) -> Vector6<f64> {
        let s = &self.config.sigmas;
        let k = (steps.max(1) as f64).sqrt();
        let (t, r) = (s.info(s.odom_t * k), s.info(s.odom_r * k));
        Vector6::new(t, t, t, r, r, r)
    }

    fn marker_info(&self) -> Vector6<f64> {
        let s = &self.config.sigmas;
        let (t, r) = (s.info(s.marker_t), s.info(s.marker_r));
        Vector6::new(t, t, t, r, r, r)
    }

    /// `T_M^G` from a keyframe estimate and a detection.
    pub fn init_marker(&mut self, kf: usize, id: u32, t_mc: &Pose) -> Result<(), SlamError> {
        if self.graph.marker_index(id).is_some() {
            return Err(SlamError::DuplicateMarker(id));
        }
        let k = self.graph.keyframes.get(kf).ok_or(SlamError::UnknownNode(format!("keyframe {kf}")))?;
        let pose = marker_world_pose(&k.pose, &self.graph.extrinsic, t_mc)?;
        self.graph.insert_marker(MarkerNode { id, pose, first_seen: k.stamp, last_seen: k.stamp })
    }

    /// Whether a re-observation counts as a loop closure.
    pub fn is_loop_closure(&self, marker: u32, stamp: f64, odometer: f64) -> bool {
        let Some(track) = self.tracks.get(&marker) else {
            return false;
        };
        let p = &self.config.loop_closure;
        stamp - track.last_seen > p.min_elapsed || odometer - track.odometer > p.min_distance
    }

    pub fn handle(&mut self, event: KeyframeEvent) -> Result<(), SlamError> {
        let index = self.graph.keyframes.len();
        if event.index != index {
            return Err(SlamError::KeyframeOrder { expected: index, found: event.index });
        }
        self.graph.keyframes.push(KeyframeNode { id: index, stamp: event.stamp, pose: event.pose });
        self.initial.push(StampedPose { t: event.stamp, pose: event.pose });
        if let Some(edge) = event.odometry {
            if index == 0 {
                return Err(SlamError::KeyframeOrder { expected: 1, found: 0 });
            }
            let info = self.odometry_info(edge.steps);
            self.graph.factors.push(Factor::Odometry {
                from: index - 1,
                to: index,
                meas: edge.delta,
                steps: edge.steps,
                info,
            });
        }
        let mut seen = Vec::new();
        for (id, t_mc) in &event.detections {
            let info = self.marker_info();
            if self.graph.marker_index(*id).is_none() {
                self.init_marker(index, *id, t_mc)?;
                self.graph.factors.push(Factor::MarkerObs { kf: index, marker: *id, meas: *t_mc, info });
            } else if self.is_loop_closure(*id, event.stamp, event.odometer) {
                self.loop_closures += 1;
                self.graph.factors.push(Factor::LoopClosure { kf: index, marker: *id, meas: *t_mc, info });
            } else {
                self.graph.factors.push(Factor::MarkerObs { kf: index, marker: *id, meas: *t_mc, info });
            }
            let i = self.graph.marker_index(*id).expect("initialized above");
            self.graph.markers[i].last_seen = event.stamp;
            self.tracks.insert(*id, MarkerTrack { last_seen: event.stamp, odometer: event.odometer, last_kf: index });
            seen.push(*id);
        }
        seen.sort_unstable();
        seen.dedup();
        self.kf_markers.push(seen);
        Ok(())
    }

    /// Drops old, marker-free keyframes whose neighbours see nearly the same
    /// markers, merging their odometry. Returns the number removed.
    fn cull(&mut self) -> usize {
        let policy = self.config.culling;
        let n = self.graph.keyframes.len();
        if !policy.enabled || n < 3 {
            return 0;
        }
        let newest = self.graph.keyframes[n - 1].stamp;
        let mut keep = vec![true; n];
        let mut prev = 0;
        for (i, flag) in keep.iter_mut().enumerate().take(n - 1).skip(1) {
            let old = newest - self.graph.keyframes[i].stamp > policy.min_age;
            if self.kf_markers[i].is_empty()
                && old
                && jaccard(&self.kf_markers[prev], &self.kf_markers[i + 1]) > policy.min_overlap
            {
                *flag = false;
            } else {
                prev = i;
            }
        }
        let removed = keep.iter().filter(|k| !**k).count();
        if removed == 0 {
            return 0;
        }
        let mut remap = vec![usize::MAX; n];
        let mut next = 0;
        for (i, k) in keep.iter().enumerate() {
            if *k {
                remap[i] = next;
                next += 1;
            }
        }
        let mut factors = Vec::with_capacity(self.graph.factors.len());
        let mut carry: Option<(usize, Pose, usize)> = None;
        for f in std::mem::take(&mut self.graph.factors) {
            match f {
                Factor::Odometry { from, to, meas, steps, .. } => {
                    let (from, meas, steps) = match carry.take() {
                        Some((origin, acc, acc_steps)) => {
                            (origin, acc.compose(&meas).expect("robot frames"), acc_steps + steps)
                        }
                        None => (from, meas, steps),
                    };
                    if keep[to] {
                        let info = self.odometry_info(steps);
                        factors.push(Factor::Odometry { from: remap[from], to: remap[to], meas, steps, info });
                    } else {
                        carry = Some((from, meas, steps));
                    }
                }
                Factor::MarkerObs { kf, marker, meas, info } => {
                    factors.push(Factor::MarkerObs { kf: remap[kf], marker, meas, info })
                }
                Factor::LoopClosure { kf, marker, meas, info } => {
                    factors.push(Factor::LoopClosure { kf: remap[kf], marker, meas, info })
                }
                other => factors.push(other),
            }
        }
        self.graph.factors = factors;
        let mut kfs = Vec::with_capacity(next);
        let mut initial = Vec::with_capacity(next);
        let mut kf_markers = Vec::with_capacity(next);
        for (i, k) in keep.iter().enumerate() {
            if *k {
                let mut node = self.graph.keyframes[i];
                node.id = remap[i];
                kfs.push(node);
                initial.push(self.initial[i]);
                kf_markers.push(std::mem::take(&mut self.kf_markers[i]));
            }
        }
        self.graph.keyframes = kfs;
        self.initial = initial;
        self.kf_markers = kf_markers;
        for t in self.tracks.values_mut() {
            t.last_kf = remap[t.last_kf];
        }
        removed
    }

    /// Builds walls, doors, and places from the optimized markers, adding
    /// wall and place factors. Returns diagnostics for skipped entities.
    fn semantic_analysis(&mut self, db: &SemanticDb) -> Vec<String> {
        let mut diagnostics = Vec::new();
        let mut walls = Vec::new();
        let mut doors = Vec::new();
        for (element, kind) in db.elements() {
            let observed: Vec<(u32, Pose)> = db
                .markers_of(element)
                .into_iter()
                .filter_map(|m| self.graph.marker(m).ok().map(|n| (m, n.pose)))
                .collect();
            if observed.is_empty() {
                continue;
            }
            match kind {
                ElementKind::Wall => {
                    let last_kf = observed.iter().map(|(m, _)| self.tracks[m].last_kf).max().expect("non-empty");
                    let camera =
                        self.graph.keyframes[last_kf].pose.compose(&self.graph.extrinsic).expect("chain").translation();
                    match detect_wall(element, &observed, &camera) {
                        Ok(w) => walls.push(w),
                        Err(e) => diagnostics.push(e.to_string()),
                    }
                }
                ElementKind::Door => {
                    let mut ids: Vec<u32> = observed.iter().map(|(m, _)| *m).collect();
                    ids.sort_unstable();
                    let pose = self.graph.marker(ids[0]).expect("observed").pose;
                    doors.push(DoorNode { id: element.to_string(), pose, markers: ids });
                }
            }
        }
        self.graph.walls = walls;
        self.graph.doors = doors;

        let mut places = Vec::new();
        for (id, kind, wall_ids) in db.places() {
            let found: Vec<&WallNode> =
                wall_ids.iter().filter_map(|w| self.graph.wall_index(w).map(|i| &self.graph.walls[i])).collect();
            if found.len() != wall_ids.len() {
                continue;
            }
            let place = match kind {
                PlaceKind::Room => infer_room(id, &found),
                PlaceKind::Corridor => infer_corridor(id, &found, self.config.corridor_parallel_deg),
            };
            match place {
                Ok(p) => places.push(p),
                Err(e) => diagnostics.push(e.to_string()),
            }
        }
        self.graph.places = places;

        let s = self.config.sigmas;
        let (wt, wr) = (s.info(s.wall_t), s.info(s.wall_r));
        for (wi, w) in self.graph.walls.iter().enumerate() {
            for m in &w.markers {
                let z = self.graph.marker(*m).expect("observed").pose.rotation() * Vector3::z();
                let sign = if w.normal.dot(&z) >= 0.0 { 1.0 } else { -1.0 };
                self.graph.factors.push(Factor::MarkerOnWall {
                    marker: *m,
                    wall: wi,
                    sign,
                    info: Vector4::new(wt, wr, wr, wr),
                });
            }
        }
        if self.config.place_factors {
            let info = Vector3::repeat(self.config.place_weight * s.info(s.marker_t));
            for (pi, p) in self.graph.places.iter().enumerate() {
                let walls = p.walls.iter().map(|w| self.graph.wall_index(w).expect("found above")).collect();
                self.graph.factors.push(Factor::Place { place: pi, walls, info });
            }
        }
        diagnostics
    }

    /// Recomputes wall anchors, door poses, and place centers from the
    /// optimized markers and planes.
    fn refresh_semantics(&mut self) -> Result<(), SlamError> {
        for i in 0..self.graph.walls.len() {
            let ids = self.graph.walls[i].markers.clone();
            let mut c = Vector3::zeros();
            for m in &ids {
                c += self.graph.marker(*m)?.pose.translation();
            }
            self.graph.walls[i].anchor = c / ids.len() as f64;
        }
        for i in 0..self.graph.doors.len() {
            let first = self.graph.doors[i].markers[0];
            self.graph.doors[i].pose = self.graph.marker(first)?.pose;
        }
        for i in 0..self.graph.places.len() {
            let p = &self.graph.places[i];
            let walls: Vec<&WallNode> = p
                .walls
                .iter()
                .map(|w| &self.graph.walls[self.graph.wall_index(w).expect("place walls exist")])
                .collect();
            let fresh = match p.kind {
                PlaceKind::Room => infer_room(&p.id, &walls)?,
                // Parallelism was checked at creation; keep the corridor even if it drifted.
                PlaceKind::Corridor => infer_corridor(&p.id, &walls, 90.0 - 1e-9)?,
            };
            self.graph.places[i] = fresh;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<SlamOutput, SlamError> {
        let culled = self.cull();
        let metric = optimize(&mut self.graph, &self.config.optimizer)?;
        let mut diagnostics = Vec::new();
        let mut semantic = None;
        let mut unobserved = Vec::new();
        let mut unknown = Vec::new();
        if let Some(db) = self.db {
            diagnostics = self.semantic_analysis(db);
            if self.graph.factors.iter().any(|f| matches!(f, Factor::MarkerOnWall { .. } | Factor::Place { .. })) {
                semantic = Some(optimize(&mut self.graph, &self.config.optimizer)?);
            }
            self.refresh_semantics()?;
            unobserved = db.markers().filter(|m| self.graph.marker_index(*m).is_none()).collect();
            unknown = self.graph.markers.iter().map(|m| m.id).filter(|m| !db.contains_marker(*m)).collect();
        }
        let trajectory =
            Trajectory::new(self.graph.keyframes.iter().map(|k| StampedPose { t: k.stamp, pose: k.pose }).collect())?;
        let initial = Trajectory::new(self.initial)?;
        let report = SlamReport {
            keyframes: self.graph.keyframes.len(),
            markers: self.graph.markers.len(),
            culled_keyframes: culled,
            loop_closures: self.loop_closures,
            metric,
            semantic,
            unobserved_markers: unobserved,
            unknown_markers: unknown,
            diagnostics,
        };
        Ok(SlamOutput { graph: self.graph, trajectory, initial, report })
    }
}

fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let inter = a.iter().filter(|x| b.binary_search(x).is_ok()).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Front-end and back-end in sequence on the calling thread.
pub fn run(log: &ObservationLog, db: Option<&SemanticDb>, config: &SlamConfig) -> Result<SlamOutput, SlamError> {
    let mut backend = Backend::new(config, db)?;
    let mut frontend = Frontend::new(config.keyframe, config.initial_pose()?);
    for r in log.records() {
        if let Some(ev) = frontend.ingest(r)? {
            backend.handle(ev)?;
        }
    }
    if let Some(ev) = frontend.finish() {
        backend.handle(ev)?;
    }
    backend.finish()
}

/// Front-end on a worker thread, back-end on the calling thread, joined by
/// an ordered channel. Produces the same result as [`run`].
pub fn run_threaded(
    log: &ObservationLog,
    db: Option<&SemanticDb>,
    config: &SlamConfig,
) -> Result<SlamOutput, SlamError> {
    let mut backend = Backend::new(config, db)?;
    let initial = config.initial_pose()?;
    let policy = config.keyframe;
    let records: &[Record] = log.records();
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<Result<KeyframeEvent, SlamError>>();
        scope.spawn(move || {
            let mut frontend = Frontend::new(policy, initial);
            for r in records {
                match frontend.ingest(r) {
                    Ok(Some(ev)) => {
                        if tx.send(Ok(ev)).is_err() {
                            return;
                        }
                    }
                    Ok(None) => {}
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                }
            }
            if let Some(ev) = frontend.finish() {
                let _ = tx.send(Ok(ev));
            }
        });
        for ev in rx {
            backend.handle(ev?)?;
        }
        Ok::<(), SlamError>(())
    })?;
    backend.finish()
}

/// Robot poses obtained by composing every odometry record onto `start`.
pub fn dead_reckoning(start: &Pose, log: &ObservationLog) -> Result<Trajectory, SlamError> {
    let mut samples: Vec<StampedPose> = Vec::new();
    let mut pose = *start;
    for r in log.records() {
        match &r.payload {
            crate::obslog::Payload::Odometry(d) => {
                pose = pose.compose(d)?;
                samples.push(StampedPose { t: r.t, pose });
            }
            crate::obslog::Payload::Marker { .. } => {
                if samples.is_empty() {
                    samples.push(StampedPose { t: r.t, pose });
                }
            }
        }
    }
    Ok(Trajectory::new(samples)?)
}
