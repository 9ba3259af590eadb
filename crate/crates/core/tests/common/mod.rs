//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wzsim::domain::{ScenarioConfig, VehicleKind, WorkZoneLayout};
use wzsim::experiment::{anova, build_l18_design, range_analysis, Factor, Observation};
use wzsim::safety::{ConflictEvent, ConflictKind, DetectorConfig};
use wzsim::trajectory::{Mode, TrajectorySample};

pub const DT: f64 = 0.1;
const EPS: f64 = 1e-9;

// ---------------------------------------------------------------------------
// logs

/// One log as a list of steps, each holding the samples of one instant.
pub type Log = Vec<Vec<TrajectorySample>>;

pub fn flatten(log: &Log) -> Vec<TrajectorySample> {
    log.iter().flatten().copied().collect()
}

pub fn sample(time: f64, id: u64, lane: u8, position: f64, speed: f64, accel: f64) -> TrajectorySample {
    TrajectorySample {
        time,
        vehicle_id: id,
        class: VehicleKind::Small,
        automated: false,
        lane,
        position,
        speed,
        accel,
        mode: Mode::Manual,
    }
}

/// Random log of at most 5 vehicles and 200 steps, dense enough to
/// produce close following, lane changes and hard braking.
pub fn random_log(seed: u64) -> Log {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = rng.random_range(20..=200usize);
    let n = rng.random_range(1..=5u64);
    struct V {
        enter: usize,
        leave: usize,
        class: VehicleKind,
        lane: u8,
        pos: f64,
        speed: f64,
        braking: usize,
    }
    let mut vs: Vec<V> = (0..n)
        .map(|_| {
            let enter = rng.random_range(0..steps / 2);
            V {
                enter,
                leave: rng.random_range(enter + 1..=steps),
                class: if rng.random_bool(0.2) { VehicleKind::Large } else { VehicleKind::Small },
                lane: rng.random_range(1..=2),
                pos: rng.random_range(0.0..80.0),
                speed: rng.random_range(0.0..25.0),
                braking: 0,
            }
        })
        .collect();
    let mut log = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * DT;
        let mut step = Vec::new();
        for (id, v) in vs.iter_mut().enumerate() {
            if k < v.enter || k >= v.leave {
                continue;
            }
            if v.braking == 0 && rng.random_bool(0.04) {
                v.braking = rng.random_range(3..=12);
            }
            let accel = if v.braking > 0 {
                v.braking -= 1;
                rng.random_range(-8.0..-5.5)
            } else if rng.random_bool(0.1) {
                rng.random_range(-8.0..-3.0)
            } else {
                rng.random_range(-2.0..2.0)
            };
            if rng.random_bool(0.02) {
                v.lane = if v.lane == 1 { 2 } else { 1 };
            }
            v.speed = (v.speed + accel * DT).max(0.0);
            v.pos += v.speed * DT;
            let mut s = sample(t, id as u64 + 1, v.lane, v.pos, v.speed, accel);
            s.class = v.class;
            step.push(s);
        }
        if !step.is_empty() {
            log.push(step);
        }
    }
    log
}

/// Hand-built logs: a closing follower, a cut-in and a lone braker.
pub fn hand_logs() -> Vec<Log> {
    let mut logs = Vec::new();
    // closing from TTC 3 s, braking hard once below 1.5 s
    let mut log = Vec::new();
    let (mut xf, mut xl, mut vf) = (0.0, 50.0, 20.0);
    for k in 0..120 {
        let t = k as f64 * DT;
        let af = if k >= 16 && vf > 5.0 { -8.0 } else { 0.0 };
        log.push(vec![sample(t, 1, 1, xf, vf, af), sample(t, 2, 1, xl, 5.0, 0.0)]);
        vf = (vf + af * DT).max(5.0);
        xf += vf * DT;
        xl += 5.0 * DT;
    }
    logs.push(log);
    // a cut-in followed by hard braking of the new follower
    let mut log = Vec::new();
    for k in 0..100 {
        let t = k as f64 * DT;
        let lane = if k < 30 { 2 } else { 1 };
        let a = if (31..40).contains(&k) { -7.0 } else { 0.0 };
        log.push(vec![sample(t, 1, 1, 10.0 + 15.0 * t, 15.0, a), sample(t, 2, lane, 25.0 + 12.0 * t, 12.0, 0.0)]);
    }
    logs.push(log);
    // lone vehicle braking hard twice, 4 s apart (second run in cooldown)
    let mut log = Vec::new();
    for k in 0..150 {
        let t = k as f64 * DT;
        let a = if (10..20).contains(&k) || (50..60).contains(&k) { -8.0 } else { 0.0 };
        log.push(vec![sample(t, 7, 3, 20.0 * t, 20.0, a)]);
    }
    logs.push(log);
    logs
}

/// Configuration with the closure switched off so only pair episodes and
/// braking runs are in play.
pub fn open_road_config(ttc_threshold: f64, brake_threshold: f64) -> DetectorConfig {
    DetectorConfig {
        ttc_threshold,
        brake_threshold,
        step_length: DT,
        layout: WorkZoneLayout {
            closure_enabled: false,
            ..Default::default()
        },
    }
}

// ---------------------------------------------------------------------------
// brute-force detector

#[derive(Debug, Clone, PartialEq)]
pub struct BruteEpisode {
    pub follower: u64,
    pub leader: u64,
    pub start: f64,
    pub last_below: f64,
    pub min_ttc: f64,
    pub max_decel: f64,
    pub kind: ConflictKind,
    pub lane: u8,
    pub position: f64,
}

fn length(s: &TrajectorySample) -> f64 {
    s.class.class().length
}

/// The nearest vehicle ahead in the same lane, ties broken by id.
fn leader_of<'a>(step: &'a [TrajectorySample], f: &TrajectorySample) -> Option<&'a TrajectorySample> {
    let ahead = |g: &&TrajectorySample| {
        g.vehicle_id != f.vehicle_id
            && g.lane == f.lane
            && (g.position > f.position || (g.position == f.position && g.vehicle_id > f.vehicle_id))
    };
    let mut best: Option<&TrajectorySample> = None;
    for g in step.iter().filter(ahead) {
        best = match best {
            Some(b) if (b.position, b.vehicle_id) <= (g.position, g.vehicle_id) => Some(b),
            _ => Some(g),
        };
    }
    best
}

fn ttc_to(f: &TrajectorySample, l: &TrajectorySample) -> Option<f64> {
    let gap = l.position - length(l) - f.position;
    if f.speed > l.speed {
        Some(gap.max(0.0) / (f.speed - l.speed))
    } else {
        None
    }
}

fn lane_change_times(log: &Log) -> BTreeMap<u64, Vec<f64>> {
    let mut out: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for k in 1..log.len() {
        if log[k][0].time - log[k - 1][0].time > 1.5 * DT + EPS {
            continue;
        }
        for s in &log[k] {
            if let Some(p) = log[k - 1].iter().find(|p| p.vehicle_id == s.vehicle_id) {
                if p.lane != s.lane {
                    out.entry(s.vehicle_id).or_default().push(s.time);
                }
            }
        }
    }
    out
}

/// Per-step scan with explicit episode bookkeeping.
pub fn brute_episodes(log: &Log, threshold: f64) -> Vec<BruteEpisode> {
    // every below-threshold reading per ordered pair
    let mut readings: BTreeMap<(u64, u64), Vec<(usize, f64)>> = BTreeMap::new();
    for (k, step) in log.iter().enumerate() {
        for f in step {
            if let Some(l) = leader_of(step, f) {
                if let Some(t) = ttc_to(f, l) {
                    if t < threshold {
                        readings.entry((f.vehicle_id, l.vehicle_id)).or_default().push((k, t));
                    }
                }
            }
        }
    }
    let changes = lane_change_times(log);
    let changed_before = |v: u64, t: f64| {
        changes
            .get(&v)
            .is_some_and(|ts| ts.iter().any(|&c| c <= t && t - c <= 2.0 + EPS))
    };
    let mut out = Vec::new();
    for ((f, l), rs) in readings {
        let mut groups: Vec<Vec<(usize, f64)>> = Vec::new();
        for r in rs {
            match groups.last_mut() {
                Some(g) if log[r.0][0].time - log[g.last().unwrap().0][0].time < 5.0 - EPS => g.push(r),
                _ => groups.push(vec![r]),
            }
        }
        for g in groups {
            let (k0, k1) = (g[0].0, g.last().unwrap().0);
            let start = log[k0][0].time;
            let fs = log[k0].iter().find(|s| s.vehicle_id == f).unwrap();
            let mut max_decel = 0.0f64;
            for step in &log[k0..=k1] {
                if let Some(s) = step.iter().find(|s| s.vehicle_id == f) {
                    max_decel = max_decel.max(-s.accel);
                }
            }
            let kind = if changed_before(f, start) || changed_before(l, start) {
                ConflictKind::LaneChange
            } else {
                ConflictKind::RearEnd
            };
            out.push(BruteEpisode {
                follower: f,
                leader: l,
                start,
                last_below: log[k1][0].time,
                min_ttc: g.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
                max_decel,
                kind,
                lane: fs.lane,
                position: fs.position,
            });
        }
    }
    out
}

/// Unexplained hard-braking events on an open road.
pub fn brute_braking(log: &Log, config: &DetectorConfig, episodes: &[BruteEpisode]) -> Vec<ConflictEvent> {
    let mut ids: Vec<u64> = log.iter().flatten().map(|s| s.vehicle_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut out = Vec::new();
    for id in ids {
        let mut candidates = Vec::new();
        let mut run: Option<(usize, usize, f64)> = None;
        let flush = |run: &mut Option<(usize, usize, f64)>, candidates: &mut Vec<(usize, usize, f64)>| {
            if let Some(r) = run.take() {
                candidates.push(r);
            }
        };
        for (k, step) in log.iter().enumerate() {
            let hard = step
                .iter()
                .find(|s| s.vehicle_id == id)
                .filter(|s| -s.accel >= config.brake_threshold - EPS);
            match (hard, &mut run) {
                (Some(s), Some(r)) if r.1 + 1 == k && log[k][0].time - log[r.1][0].time <= 1.5 * DT + EPS => {
                    r.1 = k;
                    r.2 = r.2.max(-s.accel);
                }
                (Some(s), _) => {
                    flush(&mut run, &mut candidates);
                    run = Some((k, k, -s.accel));
                }
                (None, _) => flush(&mut run, &mut candidates),
            }
        }
        flush(&mut run, &mut candidates);
        let mut last_kept: Option<f64> = None;
        for (k0, k1, max_decel) in candidates {
            let (first, last) = (log[k0][0].time, log[k1][0].time);
            if last - first + config.step_length < 0.5 - EPS {
                continue;
            }
            let s = log[k0].iter().find(|s| s.vehicle_id == id).unwrap();
            let attributed = leader_of(&log[k0], s)
                .and_then(|l| ttc_to(s, l))
                .is_some_and(|t| t < 2.0 * config.ttc_threshold);
            let overlaps = episodes
                .iter()
                .any(|e| e.follower == id && e.start <= last + EPS && first <= e.last_below + EPS);
            if attributed || overlaps {
                continue;
            }
            if last_kept.is_some_and(|t| first - t < 10.0 - EPS) {
                continue;
            }
            last_kept = Some(first);
            out.push(ConflictEvent {
                kind: ConflictKind::SingleVehicle,
                time: first,
                primary: id,
                secondary: None,
                min_ttc: None,
                max_decel,
                position: s.position,
                lane: s.lane,
            });
        }
    }
    out
}

/// Every event the detector should report on an open-road log.
pub fn brute_events(log: &Log, config: &DetectorConfig) -> Vec<ConflictEvent> {
    let episodes = brute_episodes(log, config.ttc_threshold);
    let mut all = brute_braking(log, config, &episodes);
    all.extend(episodes.iter().map(|e| ConflictEvent {
        kind: e.kind,
        time: e.start,
        primary: e.follower,
        secondary: Some(e.leader),
        min_ttc: Some(e.min_ttc),
        max_decel: e.max_decel,
        position: e.position,
        lane: e.lane,
    }));
    all.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.primary.cmp(&b.primary))
            .then(a.kind.cmp(&b.kind))
            .then(a.secondary.cmp(&b.secondary))
    });
    all
}

/// No single-vehicle event starts inside a pair episode of the same
/// follower, and no braking run is reported twice.
pub fn exclusive(events: &[ConflictEvent], episodes: &[BruteEpisode]) -> bool {
    let singles: Vec<&ConflictEvent> = events.iter().filter(|e| e.kind == ConflictKind::SingleVehicle).collect();
    let inside = singles.iter().any(|s| {
        episodes
            .iter()
            .any(|e| e.follower == s.primary && e.start - EPS <= s.time && s.time <= e.last_below + EPS)
    });
    let mut keys: Vec<(u64, u64)> = singles.iter().map(|s| (s.primary, (s.time / DT).round() as u64)).collect();
    let n = keys.len();
    keys.sort_unstable();
    keys.dedup();
    !inside && keys.len() == n
}

// ---------------------------------------------------------------------------
// statistics

pub struct BruteAnovaRow {
    pub sums: Vec<f64>,
    pub counts: Vec<usize>,
    pub means: Vec<f64>,
    pub range: f64,
    pub ss: f64,
    pub df: usize,
}

pub struct BruteAnova {
    pub rows: Vec<BruteAnovaRow>,
    pub ss_total: f64,
    pub ss_error: f64,
    pub df_error: usize,
}

/// Nested loops over factors, levels and trials.
pub fn brute_anova(obs: &[Observation]) -> BruteAnova {
    let mut total = 0.0;
    for o in obs {
        total += o.value;
    }
    let grand = total / obs.len() as f64;
    let mut ss_total = 0.0;
    for o in obs {
        ss_total += (o.value - grand) * (o.value - grand);
    }
    let mut rows = Vec::new();
    for f in Factor::ALL {
        let mut sums = Vec::new();
        let mut counts = Vec::new();
        let mut means = Vec::new();
        for level in 0..f.level_count() {
            let mut s = 0.0;
            let mut c = 0;
            for o in obs {
                if o.levels[f.index()] == level {
                    s += o.value;
                    c += 1;
                }
            }
            sums.push(s);
            counts.push(c);
            means.push(if c > 0 { s / c as f64 } else { f64::NAN });
        }
        let present: Vec<f64> = means.iter().copied().filter(|m| !m.is_nan()).collect();
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for &m in &present {
            hi = hi.max(m);
            lo = lo.min(m);
        }
        let mut ss = 0.0;
        for (m, &c) in means.iter().zip(&counts) {
            if c > 0 {
                ss += c as f64 * (m - grand) * (m - grand);
            }
        }
        rows.push(BruteAnovaRow {
            sums,
            counts,
            means,
            range: if present.is_empty() { 0.0 } else { hi - lo },
            ss,
            df: present.len() - 1,
        });
    }
    let df_factors: usize = rows.iter().map(|r| r.df).sum();
    let ss_factors: f64 = rows.iter().map(|r| r.ss).sum();
    BruteAnova {
        ss_total,
        ss_error: ss_total - ss_factors,
        df_error: obs.len() - 1 - df_factors,
        rows,
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    // Stirling with enough correction terms for half-integer arguments >= 1
    fn ln_gamma(x: f64) -> f64 {
        if x < 8.0 {
            return ln_gamma(x + 1.0) - x.ln();
        }
        let x2 = x * x;
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
            + 1.0 / (1260.0 * x2 * x2 * x)
    }
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `P(F > f)` by composite Simpson integration of the density over
/// `[0, f]` after the substitution `x = u²`, which removes the
/// singularity at zero for one numerator degree of freedom.
pub fn f_tail_quadrature(f: f64, d1: f64, d2: f64) -> f64 {
    let norm = (0.5 * d1) * (d1 / d2).ln() - ln_beta(0.5 * d1, 0.5 * d2);
    let density_u = |u: f64| {
        if u <= 0.0 {
            return if d1 == 1.0 { 2.0 * norm.exp() } else { 0.0 };
        }
        let x = u * u;
        let ln = norm + (0.5 * d1 - 1.0) * x.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln();
        2.0 * u * ln.exp()
    };
    let n = 20_000;
    let b = f.sqrt();
    let h = b / n as f64;
    let mut acc = density_u(0.0) + density_u(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * density_u(i as f64 * h);
    }
    1.0 - acc * h / 3.0
}

/// Two replications of the design with random values, or 36 fully random
/// level assignments when `scrambled`.
pub fn random_observations(seed: u64, scrambled: bool) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = build_l18_design();
    let mut obs = Vec::new();
    for _ in 0..2 {
        for row in &design {
            let levels = if scrambled {
                Factor::ALL.map(|f| rng.random_range(0..f.level_count()))
            } else {
                row.levels
            };
            obs.push(Observation {
                levels,
                value: rng.random_range(0.0..100.0f64).round() + rng.random_range(0.0..1.0),
            });
        }
    }
    obs
}

const STATS_TOL: f64 = 1e-9;

/// Compares the library against nested-loop recomputation; the p-values
/// against quadrature.
pub fn stats_agree(obs: &[Observation]) -> Result<(), String> {
    let brute = brute_anova(obs);
    let ranges = range_analysis(obs);
    let a = anova(obs);
    for (r, b) in ranges.iter().zip(&brute.rows) {
        if r.counts != b.counts {
            return Err(format!("{}: counts {:?} vs {:?}", r.factor, r.counts, b.counts));
        }
        for (x, y) in r.sums.iter().zip(&b.sums).chain(r.means.iter().zip(&b.means)) {
            if !rel_close(*x, *y, STATS_TOL) {
                return Err(format!("{}: level statistic {x} vs {y}", r.factor));
            }
        }
        if !rel_close(r.range, b.range, STATS_TOL) {
            return Err(format!("{}: range {} vs {}", r.factor, r.range, b.range));
        }
    }
    if !rel_close(a.ss_total, brute.ss_total, STATS_TOL) || !rel_close(a.ss_error, brute.ss_error, STATS_TOL) {
        return Err("total or error sum of squares".into());
    }
    if a.df_error != brute.df_error {
        return Err(format!("df_error {} vs {}", a.df_error, brute.df_error));
    }
    let ms_error = brute.ss_error / brute.df_error as f64;
    for (row, b) in a.rows.iter().zip(&brute.rows) {
        if row.df != b.df || !rel_close(row.ss, b.ss, STATS_TOL) {
            return Err(format!("{}: ss {} vs {}", row.factor, row.ss, b.ss));
        }
        if ms_error <= 0.0 {
            if !(a.degenerate && row.p == 0.0) {
                return Err(format!("{}: zero error variance not flagged", row.factor));
            }
            continue;
        }
        let f = b.ss / b.df as f64 / ms_error;
        if !rel_close(row.f, f, STATS_TOL) {
            return Err(format!("{}: F {} vs {f}", row.factor, row.f));
        }
        let p = f_tail_quadrature(f, b.df as f64, brute.df_error as f64);
        if (row.p - p).abs() > 1e-6 {
            return Err(format!("{}: p {} vs quadrature {p}", row.factor, row.p));
        }
    }
    Ok(())
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a.is_nan() && b.is_nan() {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

// ---------------------------------------------------------------------------
// scenarios

/// The bundled middle-level scenario at desk scale.
pub fn desk_scenario() -> ScenarioConfig {
    let text = include_str!("../../../../scenarios/baseline.toml");
    let mut c = ScenarioConfig::from_toml_str(text).expect("baseline parses");
    c.duration = 600.0;
    c
}
