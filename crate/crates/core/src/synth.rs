//! Seeded synthetic scenarios: planted sites with launch-pad layouts,
//! per-class detector responses, and background clutter with hotspots.
//!
//! Every detector scans a regular grid with its own stride. A true object
//! lights up the grid chips inside its footprint around a jittered location;
//! clutter is a homogeneous Poisson process plus Poisson hotspots. A chip
//! reports one score per class, the maximum of everything that landed on it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Candidate, CandidateSource};
use crate::field::{ObjectClass, RawDetection};
use crate::geo::Point;

/// Pseudo-candidate negatives sit this far from each site, meters.
pub const TRAINING_OFFSET_M: f64 = 5_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aoi {
    pub width_km: f64,
    pub height_km: f64,
}

impl Aoi {
    pub fn area_km2(&self) -> f64 {
        self.width_km * self.height_km
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width_km * 1e3).contains(&p.x) && (0.0..=self.height_km * 1e3).contains(&p.y)
    }
}

/// Closed score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange(pub f64, pub f64);

impl ScoreRange {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.1 > self.0 {
            rng.random_range(self.0..=self.1)
        } else {
            self.0
        }
    }

    fn validate(&self, what: &str, problems: &mut Vec<String>) {
        if !(0.0 <= self.0 && self.0 <= self.1 && self.1 <= 1.0) {
            problems.push(format!("{what}: score range [{}, {}] must lie in [0, 1]", self.0, self.1));
        }
    }
}

/// How one detector responds to a true object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub stride_m: f64,
    /// Chips within this distance of the object respond.
    pub footprint_m: f64,
    /// Probability that a responding chip scores in `hit_score`.
    pub hit_rate: f64,
    pub hit_score: ScoreRange,
    /// Score of responding chips that miss; none means they report nothing.
    pub miss_score: Option<ScoreRange>,
    /// Standard deviation of the object location error, meters.
    pub jitter_sigma_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterSpec {
    /// Isolated false detections per square kilometre.
    pub rate_per_km2: f64,
    pub score: ScoreRange,
    pub hotspots: usize,
    pub hotspot_score: ScoreRange,
    /// Mean detections per hotspot.
    pub hotspot_intensity: f64,
    pub hotspot_radius_m: f64,
    /// Hotspots placed on the first site-class hotspot centres instead of at
    /// random (ignored for the site class itself).
    pub colocated_hotspots: usize,
}

impl ClutterSpec {
    pub fn none() -> Self {
        Self {
            rate_per_km2: 0.0,
            score: ScoreRange(0.0, 0.0),
            hotspots: 0,
            hotspot_score: ScoreRange(0.0, 0.0),
            hotspot_intensity: 0.0,
            hotspot_radius_m: 0.0,
            colocated_hotspots: 0,
        }
    }
}

/// Relative frequency of pad contents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyMix {
    pub empty: f64,
    pub missile: f64,
    pub tel: f64,
    pub tel_group: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub aoi: Aoi,
    pub site_count: usize,
    /// Minimum distance between sites and from sites to the AOI border, meters.
    pub site_spacing_m: f64,
    pub pad_ring_radius_m: f64,
    pub pads_min: usize,
    pub pads_max: usize,
    pub occupancy: OccupancyMix,
    pub detectors: BTreeMap<ObjectClass, DetectorSpec>,
    pub clutter: BTreeMap<ObjectClass, ClutterSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        let site = DetectorSpec {
            stride_m: 75.0,
            footprint_m: 150.0,
            hit_rate: 0.6,
            hit_score: ScoreRange(0.9, 1.0),
            miss_score: Some(ScoreRange(0.2, 0.9)),
            jitter_sigma_m: 30.0,
        };
        let component = |stride_m: f64, footprint_m: f64, jitter_sigma_m: f64| DetectorSpec {
            stride_m,
            footprint_m,
            hit_rate: 0.7,
            hit_score: ScoreRange(0.99, 1.0),
            miss_score: Some(ScoreRange(0.5, 0.99)),
            jitter_sigma_m,
        };
        let detectors = BTreeMap::from([
            (ObjectClass::Site, site),
            (ObjectClass::EmptyLp, component(16.0, 20.0, 3.0)),
            (ObjectClass::ComboLp, component(16.0, 20.0, 3.0)),
            (ObjectClass::Missile, component(8.0, 8.0, 2.0)),
            (ObjectClass::Tel, component(8.0, 8.0, 2.0)),
            (ObjectClass::TelGroup, component(16.0, 16.0, 3.0)),
        ]);
        let component_clutter = ClutterSpec {
            rate_per_km2: 0.02,
            score: ScoreRange(0.95, 1.0),
            hotspots: 12,
            hotspot_score: ScoreRange(0.97, 1.0),
            hotspot_intensity: 6.0,
            hotspot_radius_m: 40.0,
            colocated_hotspots: 12,
        };
        let mut clutter = BTreeMap::from([(
            ObjectClass::Site,
            ClutterSpec {
                rate_per_km2: 0.01,
                score: ScoreRange(0.5, 1.0),
                hotspots: 60,
                hotspot_score: ScoreRange(0.9, 1.0),
                hotspot_intensity: 10.0,
                hotspot_radius_m: 150.0,
                colocated_hotspots: 0,
            },
        )]);
        for c in ObjectClass::COMPONENTS {
            clutter.insert(c, component_clutter);
        }
        Self {
            seed: 0,
            aoi: Aoi {
                width_km: 200.0,
                height_km: 200.0,
            },
            site_count: 16,
            site_spacing_m: 10_000.0,
            pad_ring_radius_m: 60.0,
            pads_min: 4,
            pads_max: 6,
            occupancy: OccupancyMix {
                empty: 0.3,
                missile: 0.3,
                tel: 0.2,
                tel_group: 0.2,
            },
            detectors,
            clutter,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.aoi.width_km > 0.0 && self.aoi.height_km > 0.0 && self.aoi.area_km2().is_finite()) {
            return Err(Error::invalid(format!(
                "AOI must have positive area, got {} x {} km",
                self.aoi.width_km, self.aoi.height_km
            )));
        }
        if self.pads_min == 0 || self.pads_min > self.pads_max {
            problems.push(format!("pad count range {}..={} is empty", self.pads_min, self.pads_max));
        }
        if !(self.pad_ring_radius_m >= 0.0) || !(self.site_spacing_m >= 0.0) {
            problems.push("pad ring radius and site spacing must be non-negative".to_string());
        }
        let o = self.occupancy;
        let weights = [o.empty, o.missile, o.tel, o.tel_group];
        if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            problems.push("occupancy weights must be non-negative with a positive sum".to_string());
        }
        for class in ObjectClass::ALL {
            match self.detectors.get(&class) {
                None => problems.push(format!("detectors.{class} is missing")),
                Some(d) => {
                    if !(d.stride_m > 0.0 && d.footprint_m >= 0.0 && d.jitter_sigma_m >= 0.0) {
                        problems.push(format!("detectors.{class}: stride must be positive, footprint and jitter non-negative"));
                    }
                    if !(0.0..=1.0).contains(&d.hit_rate) {
                        problems.push(format!("detectors.{class}.hit_rate must lie in [0, 1]"));
                    }
                    d.hit_score.validate(&format!("detectors.{class}.hit_score"), &mut problems);
                    if let Some(m) = d.miss_score {
                        m.validate(&format!("detectors.{class}.miss_score"), &mut problems);
                    }
                }
            }
            if let Some(c) = self.clutter.get(&class) {
                if !(c.rate_per_km2 >= 0.0 && c.hotspot_intensity >= 0.0 && c.hotspot_radius_m >= 0.0) {
                    problems.push(format!("clutter.{class}: rates and radii must be non-negative"));
                }
                c.score.validate(&format!("clutter.{class}.score"), &mut problems);
                c.hotspot_score.validate(&format!("clutter.{class}.hotspot_score"), &mut problems);
                if c.colocated_hotspots > c.hotspots {
                    problems.push(format!("clutter.{class}: more colocated hotspots than hotspots"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    pub fn stride(&self, class: ObjectClass) -> Result<f64> {
        self.detectors
            .get(&class)
            .map(|d| d.stride_m)
            .ok_or_else(|| Error::invalid(format!("no detector for {class}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    Empty,
    Missile,
    Tel,
    TelGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pad {
    pub location: Point,
    pub occupancy: Occupancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTruth {
    pub id: u64,
    pub center: Point,
    pub pads: Vec<Pad>,
    pub label: bool,
}

/// One physical object a detector responds to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub class: ObjectClass,
    pub location: Point,
    pub site_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub scenario: Scenario,
    pub sites: Vec<SiteTruth>,
    pub objects: Vec<ObjectTruth>,
    /// Site-class hotspot centres (false-positive concentrations).
    pub hotspot_centers: Vec<Point>,
    pub detections: BTreeMap<ObjectClass, Vec<RawDetection>>,
}

/// Chip scores of one class keyed by grid cell.
struct Chips {
    stride: f64,
    scores: BTreeMap<(i64, i64), f64>,
}

impl Chips {
    fn new(stride: f64) -> Self {
        Self {
            stride,
            scores: BTreeMap::new(),
        }
    }

    fn cell(&self, p: Point) -> (i64, i64) {
        ((p.x / self.stride).round() as i64, (p.y / self.stride).round() as i64)
    }

    fn put(&mut self, cell: (i64, i64), score: f64) {
        let s = self.scores.entry(cell).or_insert(score);
        *s = s.max(score);
    }

    fn center(&self, cell: (i64, i64)) -> Point {
        Point::new(cell.0 as f64 * self.stride, cell.1 as f64 * self.stride)
    }
}

fn uniform_point(aoi: &Aoi, margin: f64, rng: &mut ChaCha8Rng) -> Point {
    let w = aoi.width_km * 1e3;
    let h = aoi.height_km * 1e3;
    let m = margin.min(w / 2.0).min(h / 2.0);
    Point::new(rng.random_range(m..=w - m), rng.random_range(m..=h - m))
}

fn disk_point(center: Point, radius: f64, rng: &mut ChaCha8Rng) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    Point::new(center.x + r * a.cos(), center.y + r * a.sin())
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

fn place_sites(s: &Scenario, rng: &mut ChaCha8Rng) -> Result<Vec<SiteTruth>> {
    let mut sites: Vec<SiteTruth> = Vec::with_capacity(s.site_count);
    let o = s.occupancy;
    let mix = [
        (Occupancy::Empty, o.empty),
        (Occupancy::Missile, o.missile),
        (Occupancy::Tel, o.tel),
        (Occupancy::TelGroup, o.tel_group),
    ];
    let total: f64 = mix.iter().map(|m| m.1).sum();
    let mut attempts = 0;
    while sites.len() < s.site_count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::invalid(format!(
                "cannot place {} sites {} m apart in the AOI",
                s.site_count, s.site_spacing_m
            )));
        }
        let center = uniform_point(&s.aoi, s.site_spacing_m / 2.0, rng);
        if sites.iter().any(|t| t.center.distance_planar(center) < s.site_spacing_m) {
            continue;
        }
        let n = rng.random_range(s.pads_min..=s.pads_max);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let pads = (0..n)
            .map(|k| {
                let a = phase + std::f64::consts::TAU * k as f64 / n as f64;
                let mut u = rng.random_range(0.0..total);
                let occupancy = mix
                    .iter()
                    .find(|(_, w)| {
                        u -= w;
                        u < 0.0
                    })
                    .map_or(Occupancy::Empty, |m| m.0);
                Pad {
                    location: Point::new(
                        center.x + s.pad_ring_radius_m * a.cos(),
                        center.y + s.pad_ring_radius_m * a.sin(),
                    ),
                    occupancy,
                }
            })
            .collect();
        sites.push(SiteTruth {
            id: sites.len() as u64,
            center,
            pads,
            label: true,
        });
    }
    Ok(sites)
}

fn site_objects(site: &SiteTruth) -> Vec<ObjectTruth> {
    let obj = |class, location| ObjectTruth {
        class,
        location,
        site_id: site.id,
    };
    let mut out = vec![obj(ObjectClass::Site, site.center)];
    for pad in &site.pads {
        let p = pad.location;
        match pad.occupancy {
            Occupancy::Empty => out.push(obj(ObjectClass::EmptyLp, p)),
            Occupancy::Missile => {
                out.push(obj(ObjectClass::ComboLp, p));
                out.push(obj(ObjectClass::Missile, p));
            }
            Occupancy::Tel => {
                out.push(obj(ObjectClass::ComboLp, p));
                out.push(obj(ObjectClass::Tel, p));
            }
            Occupancy::TelGroup => {
                out.push(obj(ObjectClass::ComboLp, p));
                out.push(obj(ObjectClass::TelGroup, p));
                out.push(obj(ObjectClass::Tel, Point::new(p.x - 8.0, p.y)));
                out.push(obj(ObjectClass::Tel, Point::new(p.x + 8.0, p.y)));
            }
        }
    }
    out
}

fn respond(chips: &mut Chips, spec: &DetectorSpec, at: Point, rng: &mut ChaCha8Rng) {
    let jitter = Normal::new(0.0, spec.jitter_sigma_m.max(0.0)).expect("valid sigma");
    let seen = Point::new(at.x + jitter.sample(rng), at.y + jitter.sample(rng));
    let reach = (spec.footprint_m / spec.stride_m).ceil() as i64 + 1;
    let (cx, cy) = chips.cell(seen);
    for iy in cy - reach..=cy + reach {
        for ix in cx - reach..=cx + reach {
            let cell = (ix, iy);
            if chips.center(cell).distance_planar(seen) > spec.footprint_m {
                continue;
            }
            if rng.random_bool(spec.hit_rate) {
                chips.put(cell, spec.hit_score.sample(rng));
            } else if let Some(m) = spec.miss_score {
                chips.put(cell, m.sample(rng));
            }
        }
    }
}

fn scatter(chips: &mut Chips, points: impl IntoIterator<Item = Point>, score: ScoreRange, aoi: &Aoi, rng: &mut ChaCha8Rng) {
    for p in points {
        if aoi.contains(p) {
            let cell = chips.cell(p);
            chips.put(cell, score.sample(rng));
        }
    }
}

/// Homogeneous clutter locations for `spec` over the AOI.
pub fn clutter_points(aoi: &Aoi, spec: &ClutterSpec, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = poisson(spec.rate_per_km2 * aoi.area_km2(), rng);
    (0..n).map(|_| uniform_point(aoi, 0.0, rng)).collect()
}

/// Generate the world described by `s`.
pub fn generate(s: &Scenario) -> Result<SyntheticWorld> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let sites = place_sites(s, &mut rng)?;
    let objects: Vec<ObjectTruth> = sites.iter().flat_map(site_objects).collect();

    let site_clutter = s.clutter.get(&ObjectClass::Site).copied().unwrap_or_else(ClutterSpec::none);
    let hotspot_margin = 1_000.0;
    let mut hotspot_centers = Vec::with_capacity(site_clutter.hotspots);
    while hotspot_centers.len() < site_clutter.hotspots {
        let p = uniform_point(&s.aoi, site_clutter.hotspot_radius_m, &mut rng);
        if sites.iter().all(|t| t.center.distance_planar(p) >= hotspot_margin) {
            hotspot_centers.push(p);
        }
    }

    let mut detections = BTreeMap::new();
    let mut next_id = 0u64;
    for class in ObjectClass::ALL {
        let spec = &s.detectors[&class];
        // separate stream per class keeps classes independent of each other
        let mut crng = ChaCha8Rng::seed_from_u64(s.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(class as u64 + 1)));
        let mut chips = Chips::new(spec.stride_m);
        for o in objects.iter().filter(|o| o.class == class) {
            respond(&mut chips, spec, o.location, &mut crng);
        }
        let clutter = s.clutter.get(&class).copied().unwrap_or_else(ClutterSpec::none);
        let background = clutter_points(&s.aoi, &clutter, &mut crng);
        scatter(&mut chips, background, clutter.score, &s.aoi, &mut crng);
        for h in 0..clutter.hotspots {
            let center = if class == ObjectClass::Site {
                hotspot_centers[h]
            } else if h < clutter.colocated_hotspots && h < hotspot_centers.len() {
                hotspot_centers[h]
            } else {
                uniform_point(&s.aoi, clutter.hotspot_radius_m, &mut crng)
            };
            let n = poisson(clutter.hotspot_intensity, &mut crng);
            let pts: Vec<Point> = (0..n).map(|_| disk_point(center, clutter.hotspot_radius_m, &mut crng)).collect();
            scatter(&mut chips, pts, clutter.hotspot_score, &s.aoi, &mut crng);
        }
        let dets: Vec<RawDetection> = chips
            .scores
            .iter()
            .map(|(&cell, &score)| {
                let id = next_id;
                next_id += 1;
                RawDetection {
                    id,
                    location: chips.center(cell),
                    score,
                    class,
                    tile: None,
                }
            })
            .collect();
        detections.insert(class, dets);
    }
    Ok(SyntheticWorld {
        scenario: s.clone(),
        sites,
        objects,
        hotspot_centers,
        detections,
    })
}

/// One positive at every site centre and negatives 5 km away in the four
/// cardinal directions, dropped when they fall outside the AOI.
pub fn make_training_set(world: &SyntheticWorld) -> Vec<Candidate> {
    let aoi = world.scenario.aoi;
    let mut out = Vec::new();
    let mut push = |location: Point, label: bool| {
        out.push(Candidate {
            id: out.len() as u64,
            location,
            site_score: 0.0,
            label: Some(label),
            source: CandidateSource::PseudoTrain,
        });
    };
    for site in &world.sites {
        push(site.center, site.label);
        let c = site.center;
        let d = TRAINING_OFFSET_M;
        for p in [
            Point::new(c.x, c.y + d),
            Point::new(c.x + d, c.y),
            Point::new(c.x, c.y - d),
            Point::new(c.x - d, c.y),
        ] {
            if aoi.contains(p) {
                push(p, false);
            }
        }
    }
    out
}
