//! Partition search over a per-partition detector: the last-seen-first
//! search and a full-scan baseline.

use serde::{Deserialize, Serialize};

use crate::fiducial::{fuse_body_pose, BodyModel, BodyPoseEstimate, Detection};
use crate::partition::PartitionLayout;
use crate::rectifier::ViewGeometry;
use crate::sphere_geometry::angular_distance;

/// Outcome of running the detector on one partition.
pub type ProbeResult = std::result::Result<Vec<Detection>, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    #[default]
    Optimized,
    Greedy,
}

impl std::str::FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "optimized" => Ok(Algo::Optimized),
            "greedy" => Ok(Algo::Greedy),
            _ => Err(format!("unknown algorithm '{s}' (optimized|greedy)")),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Optimized => "optimized",
            Algo::Greedy => "greedy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Detector calls allowed per frame; `None` = unlimited.
    pub budget: Option<usize>,
    /// Forget the last-seen partition after this many consecutive frames
    /// without a hit; `None` keeps it forever.
    pub staleness_horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub found: bool,
    /// Partition that produced the hit (first hit for the optimized search,
    /// lowest firing index for the full scan).
    pub partition: Option<usize>,
    pub detections: Vec<Detection>,
    pub estimate: Option<BodyPoseEstimate>,
    pub detector_calls: usize,
    /// Partitions probed, in order.
    pub probes: Vec<usize>,
    pub failures: Vec<(usize, String)>,
}

/// Row `i`: every index sorted by center angle from `i`, self first, ties by
/// ascending index.
pub fn precompute_neighbor_order(layout: &PartitionLayout) -> Vec<Vec<usize>> {
    let c = layout.centers();
    (0..c.len())
        .map(|i| {
            let d: Vec<f64> = c.iter().map(|cj| angular_distance(&c[i], cj)).collect();
            let mut row: Vec<usize> = (0..c.len()).collect();
            row.sort_by(|&a, &b| {
                (a != i).cmp(&(b != i)).then(d[a].total_cmp(&d[b])).then(a.cmp(&b))
            });
            row
        })
        .collect()
}

/// Mutable search state. One frame at a time.
#[derive(Debug, Clone)]
pub struct TrackerState {
    last: Option<usize>,
    neighbor_order: Vec<Vec<usize>>,
    views: Vec<ViewGeometry>,
    config: TrackerConfig,
    misses: usize,
    // Resume points for budgeted scans: position in the cold ascending scan,
    // in the warm neighbor scan (after `last`), and in the greedy sweep.
    cold_cursor: usize,
    warm_cursor: usize,
    greedy_cursor: usize,
}

impl TrackerState {
    /// `views` must hold one geometry per partition, in partition order.
    pub fn new(layout: &PartitionLayout, views: Vec<ViewGeometry>, config: TrackerConfig) -> crate::Result<Self> {
        if views.len() != layout.n() {
            return Err(crate::Error::InvalidArgument(format!(
                "{} views for {} partitions",
                views.len(),
                layout.n()
            )));
        }
        if config.budget == Some(0) {
            return Err(crate::Error::InvalidArgument("budget must be at least one call".into()));
        }
        Ok(TrackerState {
            last: None,
            neighbor_order: precompute_neighbor_order(layout),
            views,
            config,
            misses: 0,
            cold_cursor: 0,
            warm_cursor: 0,
            greedy_cursor: 0,
        })
    }

    pub fn last_partition(&self) -> Option<usize> {
        self.last
    }

    pub fn neighbor_order(&self) -> &[Vec<usize>] {
        &self.neighbor_order
    }

    pub fn n(&self) -> usize {
        self.neighbor_order.len()
    }

    pub fn views(&self) -> &[ViewGeometry] {
        &self.views
    }

    fn budget(&self) -> usize {
        self.config.budget.unwrap_or(usize::MAX).min(self.n())
    }

    pub fn step(&mut self, algo: Algo, detect: impl FnMut(usize) -> ProbeResult, body: &BodyModel) -> FrameResult {
        match algo {
            Algo::Optimized => self.step_optimized(detect, body),
            Algo::Greedy => self.step_greedy(detect, body),
        }
    }

    /// Cold: ascending scan. Warm: the last-seen partition, then the others
    /// by distance from it. Stops at the first partition with detections.
    pub fn step_optimized(&mut self, mut detect: impl FnMut(usize) -> ProbeResult, body: &BodyModel) -> FrameResult {
        let n = self.n();
        let budget = self.budget();
        let mut probes = Vec::new();
        let mut failures = Vec::new();
        let mut hit: Option<(usize, Vec<Detection>)> = None;
        let mut probe = |p: usize, probes: &mut Vec<usize>, failures: &mut Vec<(usize, String)>| {
            probes.push(p);
            match detect(p) {
                Ok(d) if !d.is_empty() => Some(d),
                Ok(_) => None,
                Err(e) => {
                    failures.push((p, e));
                    None
                }
            }
        };

        match self.last {
            None => {
                while probes.len() < budget && hit.is_none() {
                    let p = self.cold_cursor;
                    self.cold_cursor = (self.cold_cursor + 1) % n;
                    if let Some(d) = probe(p, &mut probes, &mut failures) {
                        hit = Some((p, d));
                    }
                }
            }
            Some(last) => {
                if let Some(d) = probe(last, &mut probes, &mut failures) {
                    hit = Some((last, d));
                }
                // Remaining partitions by distance, resuming where a budgeted
                // frame stopped.
                let rest = n - 1;
                let mut scanned = 0;
                while hit.is_none() && probes.len() < budget && scanned < rest {
                    let p = self.neighbor_order[last][1 + self.warm_cursor];
                    self.warm_cursor = (self.warm_cursor + 1) % rest;
                    scanned += 1;
                    if let Some(d) = probe(p, &mut probes, &mut failures) {
                        hit = Some((p, d));
                    }
                }
            }
        }

        match hit {
            Some((p, dets)) => {
                if self.last != Some(p) {
                    self.warm_cursor = 0;
                }
                self.last = Some(p);
                self.misses = 0;
                self.cold_cursor = 0;
                let estimate = fuse_body_pose(&dets, &self.views, body);
                FrameResult {
                    found: true,
                    partition: Some(p),
                    detections: dets,
                    estimate,
                    detector_calls: probes.len(),
                    probes,
                    failures,
                }
            }
            None => {
                self.register_miss();
                FrameResult {
                    found: false,
                    partition: None,
                    detections: Vec::new(),
                    estimate: None,
                    detector_calls: probes.len(),
                    probes,
                    failures,
                }
            }
        }
    }

    fn register_miss(&mut self) {
        self.misses += 1;
        if let Some(k) = self.config.staleness_horizon {
            if self.misses >= k && self.last.is_some() {
                self.last = None;
                self.warm_cursor = 0;
                self.cold_cursor = 0;
            }
        }
    }

    /// Probes every partition in index order (or the next `budget` of the
    /// sweep) and fuses everything that fired.
    pub fn step_greedy(&mut self, mut detect: impl FnMut(usize) -> ProbeResult, body: &BodyModel) -> FrameResult {
        let n = self.n();
        let budget = self.budget();
        let mut probes = Vec::with_capacity(budget);
        let mut failures = Vec::new();
        let mut all = Vec::new();
        let mut fired = Vec::new();
        for _ in 0..budget {
            let p = self.greedy_cursor;
            self.greedy_cursor = (self.greedy_cursor + 1) % n;
            probes.push(p);
            match detect(p) {
                Ok(d) if !d.is_empty() => {
                    fired.push(p);
                    all.extend(d);
                }
                Ok(_) => {}
                Err(e) => failures.push((p, e)),
            }
        }
        let found = !all.is_empty();
        let estimate = if found { fuse_body_pose(&all, &self.views, body) } else { None };
        if found {
            self.last = fired.iter().min().copied();
            self.misses = 0;
        } else {
            self.register_miss();
        }
        FrameResult {
            found,
            partition: fired.iter().min().copied(),
            detections: all,
            estimate,
            detector_calls: probes.len(),
            probes,
            failures,
        }
    }
}
