//! Synthetic matches drawn from a known death hazard, with the exact
//! conditional death probability available as a reference ceiling.
//!
//! Heroes follow a random-waypoint walk biased toward a drifting hotspot.
//! Health drains near enemies and enemy towers and regenerates otherwise.
//! Movement and health evolve on their own random stream and never react to
//! deaths; deaths are drawn per tick from the hazard of the current frame's
//! recorded state, so every input to the hazard is in the match file.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{downsample, label_frames, DatasetError, MatchSource};
use crate::eval::{average_precision, pr_curve, EvalError};
use crate::match_data::{
    strip_pauses, team_of, DeathEvent, HeroSnapshot, ItemSlot, MatchError, MatchRecord, TickFrame,
    Tower, HERO_COUNT, STAT_ATTR_COUNT, STAT_TOTAL_EARNED_GOLD, STATE_ATTR_COUNT, TRACKED_ITEMS,
};

pub const SIDECAR_FILE: &str = "synth.toml";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("match {0} was not produced by this generator (expected hash {1:016x})")]
    ForeignMatch(String, u64),
    #[error("frame {0} out of range")]
    FrameOutOfRange(usize),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Logistic map from danger drivers to a per-tick death probability:
/// `base_rate + peak_rate * sigmoid(intercept + w . drivers)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    pub base_rate: f64,
    pub peak_rate: f64,
    pub intercept: f64,
    pub w_health: f64,
    pub w_enemies: f64,
    pub w_tower: f64,
    pub w_visible: f64,
}

/// Observable inputs to the hazard for one hero at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DangerDrivers {
    /// `1 - health / max_health`
    pub health_deficit: f64,
    pub near_enemies: usize,
    pub near_enemy_tower: bool,
    pub visible: bool,
}

impl HazardModel {
    pub fn zero() -> Self {
        HazardModel {
            base_rate: 0.0,
            peak_rate: 0.0,
            intercept: 0.0,
            w_health: 0.0,
            w_enemies: 0.0,
            w_tower: 0.0,
            w_visible: 0.0,
        }
    }

    pub fn rate(&self, d: &DangerDrivers) -> f64 {
        if self.peak_rate == 0.0 {
            return self.base_rate;
        }
        let z = self.intercept
            + self.w_health * d.health_deficit
            + self.w_enemies * d.near_enemies as f64
            + self.w_tower * f64::from(u8::from(d.near_enemy_tower))
            + self.w_visible * f64::from(u8::from(d.visible));
        self.base_rate + self.peak_rate / (1.0 + (-z).exp())
    }

    pub fn max_rate(&self) -> f64 {
        self.base_rate + self.peak_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub match_count: usize,
    /// Frames per match, paused frames included.
    pub frames: usize,
    pub ticks_per_frame: u64,
    pub tick_interval: f64,
    pub roster_size: usize,
    pub map_size: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Probability that a new waypoint is drawn around the hotspot.
    pub hotspot_bias: f64,
    pub hotspot_spread: f64,
    pub hotspot_seconds: f64,
    pub near_radius: f64,
    pub vision_radius: f64,
    pub tower_radius: f64,
    pub max_health: f64,
    /// Health per second, away from enemies.
    pub health_regen: f64,
    /// Health per second per nearby enemy.
    pub health_decay: f64,
    /// Health per second while inside enemy tower range.
    pub tower_decay: f64,
    pub min_health_fraction: f64,
    pub respawn_seconds: f64,
    /// Chance per frame step that a pause starts.
    pub pause_probability: f64,
    pub pause_frames: usize,
    pub hazard: HazardModel,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            match_count: 250,
            frames: 3000,
            ticks_per_frame: 4,
            tick_interval: 1.0 / 30.0,
            roster_size: 130,
            map_size: 6000.0,
            speed_min: 36.0,
            speed_max: 90.0,
            hotspot_bias: 0.4,
            hotspot_spread: 700.0,
            hotspot_seconds: 45.0,
            near_radius: 900.0,
            vision_radius: 1400.0,
            tower_radius: 800.0,
            max_health: 1000.0,
            health_regen: 20.0,
            health_decay: 10.0,
            tower_decay: 60.0,
            min_health_fraction: 0.05,
            respawn_seconds: 0.0,
            pause_probability: 0.0,
            pause_frames: 0,
            hazard: HazardModel {
                base_rate: 2e-5,
                peak_rate: 0.05,
                intercept: -14.0,
                w_health: 10.0,
                w_enemies: 2.0,
                w_tower: 1.5,
                w_visible: 0.5,
            },
            seed: 7,
        }
    }
}

/// Team-0 tower positions as map fractions; team 1 is the point mirror.
const TOWER_LAYOUT: [(f64, f64); 3] = [(0.15, 0.15), (0.1, 0.42), (0.42, 0.1)];

impl SynthConfig {
    pub fn step_seconds(&self) -> f64 {
        self.ticks_per_frame as f64 * self.tick_interval
    }

    /// Unpaused frame steps a hero stays dead after the step it died in.
    pub fn respawn_steps(&self) -> u64 {
        (self.respawn_seconds / self.step_seconds()).round() as u64
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        let h = &self.hazard;
        let rates = [
            self.tick_interval,
            self.map_size,
            self.speed_min,
            self.speed_max,
            self.hotspot_bias,
            self.hotspot_spread,
            self.hotspot_seconds,
            self.near_radius,
            self.vision_radius,
            self.tower_radius,
            self.max_health,
            self.health_regen,
            self.health_decay,
            self.tower_decay,
            self.min_health_fraction,
            self.respawn_seconds,
            self.pause_probability,
            h.base_rate,
            h.peak_rate,
        ];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return bad("rates and distances must be finite and non-negative");
        }
        if ![h.intercept, h.w_health, h.w_enemies, h.w_tower, h.w_visible]
            .iter()
            .all(|w| w.is_finite())
        {
            return bad("hazard coefficients must be finite");
        }
        if self.frames == 0 || self.ticks_per_frame == 0 || self.tick_interval == 0.0 {
            return bad("frames, ticks_per_frame and tick_interval must be positive");
        }
        if self.roster_size < HERO_COUNT {
            return bad("roster must hold at least 10 heroes");
        }
        if self.speed_min > self.speed_max || self.min_health_fraction > 1.0 || self.hotspot_bias > 1.0 {
            return bad("speed range, min_health_fraction or hotspot_bias out of range");
        }
        if self.pause_probability > 1.0 {
            return bad("pause_probability must be at most 1");
        }
        let step_max = 1.0 - (1.0 - h.max_rate()).powi(self.ticks_per_frame as i32);
        if h.max_rate() > 1.0 || step_max > 0.5 {
            return bad("hazard allows a per-frame death probability above 0.5");
        }
        Ok(())
    }

    /// Hash of everything that shapes the generative process (not the corpus size or seed).
    pub fn generator_hash(&self) -> u64 {
        let mut process = self.clone();
        process.match_count = 0;
        process.seed = 0;
        let text = toml::to_string(&process).expect("config serializes");
        xxhash_rust::xxh3::xxh3_64(text.as_bytes())
    }

    pub fn match_seeds(&self) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.match_count).map(|_| rng.random()).collect()
    }

    pub fn match_id(&self, match_seed: u64) -> String {
        format!("synth-{:016x}-{match_seed:016x}", self.generator_hash())
    }

    pub fn towers(&self) -> Vec<Tower> {
        let mut out = Vec::new();
        for team in 0..2u8 {
            for &(fx, fy) in &TOWER_LAYOUT {
                let (x, y) = if team == 0 {
                    (fx * self.map_size, fy * self.map_size)
                } else {
                    ((1.0 - fx) * self.map_size, (1.0 - fy) * self.map_size)
                };
                out.push(Tower { team, x, y, alive: true });
            }
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let cfg: SynthConfig =
            toml::from_str(text).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Danger drivers of `slot` from the recorded contents of one frame.
pub fn danger_drivers(cfg: &SynthConfig, frame: &TickFrame, slot: usize) -> DangerDrivers {
    let heroes = frame.by_slot();
    let h = heroes[slot];
    let pos = (h.pos_x, h.pos_y);
    let team = team_of(slot);
    let near_enemies = heroes
        .iter()
        .filter(|o| team_of(o.slot as usize) != team && dist(pos, (o.pos_x, o.pos_y)) <= cfg.near_radius)
        .count();
    let near_enemy_tower = frame.towers.as_deref().unwrap_or(&[]).iter().any(|t| {
        t.alive && t.team != team && dist(pos, (t.x, t.y)) <= cfg.tower_radius
    });
    DangerDrivers {
        health_deficit: 1.0 - h.health / h.max_health,
        near_enemies,
        near_enemy_tower,
        visible: h.visible_to_enemy,
    }
}

struct Walker {
    pos: (f64, f64),
    target: (f64, f64),
    speed: f64,
    health: f64,
}

/// Per-frame latent state, independent of deaths.
struct Latent {
    paused: Vec<bool>,
    positions: Vec<[(f64, f64); HERO_COUNT]>,
    health: Vec<[f64; HERO_COUNT]>,
}

fn waypoint(cfg: &SynthConfig, hotspot: (f64, f64), rng: &mut ChaCha8Rng) -> (f64, f64) {
    let m = cfg.map_size;
    if rng.random_bool(cfg.hotspot_bias) {
        let dx = (rng.random::<f64>() * 2.0 - 1.0) * cfg.hotspot_spread;
        let dy = (rng.random::<f64>() * 2.0 - 1.0) * cfg.hotspot_spread;
        ((hotspot.0 + dx).clamp(0.0, m), (hotspot.1 + dy).clamp(0.0, m))
    } else {
        (rng.random::<f64>() * m, rng.random::<f64>() * m)
    }
}

/// Health of `slot` one step after a frame with these positions. Depends on
/// positions only, so it can be replayed from a recorded match.
fn next_health(
    cfg: &SynthConfig,
    towers: &[Tower],
    positions: &[(f64, f64); HERO_COUNT],
    slot: usize,
    health: f64,
) -> f64 {
    let team = team_of(slot);
    let pos = positions[slot];
    let near = (0..HERO_COUNT)
        .filter(|&o| team_of(o) != team && dist(pos, positions[o]) <= cfg.near_radius)
        .count();
    let in_tower = towers
        .iter()
        .any(|t| t.team != team && dist(pos, (t.x, t.y)) <= cfg.tower_radius);
    let rate = if near == 0 && !in_tower {
        cfg.health_regen
    } else {
        -(cfg.health_decay * near as f64 + if in_tower { cfg.tower_decay } else { 0.0 })
    };
    let floor = cfg.min_health_fraction * cfg.max_health;
    (health + rate * cfg.step_seconds()).clamp(floor, cfg.max_health)
}

fn simulate_latent(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Latent {
    let m = cfg.map_size;
    let step = cfg.step_seconds();
    let towers = cfg.towers();
    let mut hotspot = (rng.random::<f64>() * m, rng.random::<f64>() * m);
    let mut walkers: Vec<Walker> = (0..HERO_COUNT)
        .map(|_| Walker {
            pos: (rng.random::<f64>() * m, rng.random::<f64>() * m),
            target: (rng.random::<f64>() * m, rng.random::<f64>() * m),
            speed: rng.random_range(cfg.speed_min..=cfg.speed_max),
            health: cfg.max_health,
        })
        .collect();
    let hotspot_steps = ((cfg.hotspot_seconds / step).round() as usize).max(1);
    let mut out = Latent {
        paused: Vec::with_capacity(cfg.frames),
        positions: Vec::with_capacity(cfg.frames),
        health: Vec::with_capacity(cfg.frames),
    };
    let mut pause_left = 0usize;
    let mut unpaused_steps = 0usize;
    for _ in 0..cfg.frames {
        let paused = pause_left > 0;
        out.paused.push(paused);
        out.positions.push(std::array::from_fn(|s| walkers[s].pos));
        out.health.push(std::array::from_fn(|s| walkers[s].health));
        if paused {
            pause_left -= 1;
            continue;
        }
        if cfg.pause_frames > 0 && rng.random_bool(cfg.pause_probability) {
            pause_left = cfg.pause_frames;
        }
        unpaused_steps += 1;
        if unpaused_steps.is_multiple_of(hotspot_steps) {
            hotspot = (rng.random::<f64>() * m, rng.random::<f64>() * m);
        }
        let positions: [(f64, f64); HERO_COUNT] = std::array::from_fn(|s| walkers[s].pos);
        for (s, w) in walkers.iter_mut().enumerate() {
            w.health = next_health(cfg, &towers, &positions, s, w.health);

            let d = dist(w.pos, w.target);
            let travel = w.speed * step;
            if d <= travel {
                w.pos = w.target;
                w.target = waypoint(cfg, hotspot, rng);
            } else {
                let f = travel / d;
                w.pos = (w.pos.0 + (w.target.0 - w.pos.0) * f, w.pos.1 + (w.target.1 - w.pos.1) * f);
            }
        }
    }
    out
}

fn snapshot(
    cfg: &SynthConfig,
    slot: usize,
    hero_id: u16,
    alive: bool,
    health: f64,
    pos: (f64, f64),
    visible: bool,
    game_time: f64,
) -> HeroSnapshot {
    let mut stat_attrs = vec![0.0; STAT_ATTR_COUNT];
    stat_attrs[STAT_TOTAL_EARNED_GOLD] = (600.0 + 2.0 * slot as f64 * 5.0) * game_time / 60.0;
    let mut hero = HeroSnapshot {
        slot: slot as u8,
        hero_id,
        alive,
        health: if alive { health } else { 0.0 },
        max_health: cfg.max_health,
        mana: 300.0,
        max_mana: 300.0,
        pos_x: pos.0,
        pos_y: pos.1,
        visible_to_enemy: visible,
        state_attrs: vec![0.0; STATE_ATTR_COUNT],
        stat_attrs,
        items: vec![ItemSlot {
            item_id: (slot % TRACKED_ITEMS.len()) as u8,
            cooldown: 0.0,
        }],
        abilities: vec![[1.0, 600.0, 90.0, 0.0, 1.0, 0.0]; 2],
    };
    hero.state_attrs[0] = 1.0;
    hero
}

/// One synthetic match; identical output for identical `(cfg, match_seed)`.
pub fn generate_match(cfg: &SynthConfig, match_seed: u64) -> Result<MatchRecord, SynthError> {
    cfg.validate()?;
    let mut latent_rng = ChaCha8Rng::seed_from_u64(match_seed);
    latent_rng.set_stream(0);
    let mut death_rng = ChaCha8Rng::seed_from_u64(match_seed);
    death_rng.set_stream(1);

    let hero_ids: Vec<u16> = sample(&mut latent_rng, cfg.roster_size, HERO_COUNT)
        .into_iter()
        .map(|i| i as u16)
        .collect();
    let latent = simulate_latent(cfg, &mut latent_rng);
    let towers = cfg.towers();
    let tpf = cfg.ticks_per_frame;
    let dt = cfg.tick_interval;
    let respawn = cfg.respawn_steps();

    let mut frames = Vec::with_capacity(cfg.frames);
    let mut deaths = Vec::new();
    // game clock in ticks; advances only on unpaused steps
    let mut clock = 0u64;
    let mut respawn_at = [0u64; HERO_COUNT];
    for k in 0..cfg.frames {
        let game_time = clock as f64 * dt;
        let positions = &latent.positions[k];
        let heroes: Vec<HeroSnapshot> = (0..HERO_COUNT)
            .map(|s| {
                let team = team_of(s);
                let visible = (0..HERO_COUNT).any(|o| {
                    team_of(o) != team && dist(positions[s], positions[o]) <= cfg.vision_radius
                });
                snapshot(
                    cfg,
                    s,
                    hero_ids[s],
                    clock >= respawn_at[s],
                    latent.health[k][s],
                    positions[s],
                    visible,
                    game_time,
                )
            })
            .collect();
        let frame = TickFrame {
            tick: k as u64 * tpf,
            game_time,
            paused: latent.paused[k],
            heroes,
            towers: Some(towers.clone()),
        };
        if !frame.paused && k + 1 < cfg.frames {
            for s in 0..HERO_COUNT {
                if clock < respawn_at[s] {
                    continue;
                }
                let h = cfg.hazard.rate(&danger_drivers(cfg, &frame, s));
                for j in 1..=tpf {
                    if death_rng.random::<f64>() < h {
                        deaths.push(DeathEvent {
                            slot: s as u8,
                            time: (clock + j) as f64 * dt,
                        });
                        respawn_at[s] = clock + (respawn + 1) * tpf;
                        break;
                    }
                }
            }
            clock += tpf;
        }
        frames.push(frame);
    }
    deaths.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.slot.cmp(&b.slot)));
    Ok(MatchRecord {
        match_id: cfg.match_id(match_seed),
        tick_interval: dt,
        roster_size: cfg.roster_size,
        frames,
        deaths,
    })
}

/// Per-tick hazard of `slot` at every frame had the hero been alive there.
///
/// Dead heroes are recorded with zero health, so their health is replayed
/// from the last frame they were alive using the recorded positions.
pub fn alive_hazards(cfg: &SynthConfig, m: &MatchRecord, slot: usize) -> Vec<f64> {
    let towers = cfg.towers();
    let mut health = cfg.max_health;
    let mut out = Vec::with_capacity(m.frames.len());
    for (k, f) in m.frames.iter().enumerate() {
        let hero = f.by_slot()[slot];
        if hero.alive {
            health = hero.health;
        } else if k > 0 && !m.frames[k - 1].paused {
            let prev = m.frames[k - 1].by_slot();
            let positions = std::array::from_fn(|s| (prev[s].pos_x, prev[s].pos_y));
            health = next_health(cfg, &towers, &positions, slot, health);
        }
        let mut d = danger_drivers(cfg, f, slot);
        d.health_deficit = 1.0 - health / cfg.max_health;
        out.push(cfg.hazard.rate(&d));
    }
    out
}

/// [`alive_hazards`] of all heroes at every unpaused, non-final frame.
/// Entries are `(frame index, rates)`; used for analytic expectations.
pub fn step_hazards(cfg: &SynthConfig, m: &MatchRecord) -> Vec<(usize, [f64; HERO_COUNT])> {
    let per_slot: Vec<Vec<f64>> = (0..HERO_COUNT).map(|s| alive_hazards(cfg, m, s)).collect();
    let last = m.frames.len().saturating_sub(1);
    m.frames[..last]
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.paused)
        .map(|(k, _)| (k, std::array::from_fn(|s| per_slot[s][k])))
        .collect()
}

fn check_tag(cfg: &SynthConfig, m: &MatchRecord) -> Result<(), SynthError> {
    let hash = cfg.generator_hash();
    if m.match_id.starts_with(&format!("synth-{hash:016x}-")) {
        Ok(())
    } else {
        Err(SynthError::ForeignMatch(m.match_id.clone(), hash))
    }
}

fn clock_ticks(time: f64, dt: f64) -> u64 {
    (time / dt).round() as u64
}

/// Exact probability that `slot` dies in `(t, t + window]`, `t` being the
/// game time of `frame`, given the deaths up to `t` and the realized states.
pub fn bayes_probability(
    cfg: &SynthConfig,
    m: &MatchRecord,
    frame: usize,
    slot: usize,
    window: f64,
) -> Result<f64, SynthError> {
    check_tag(cfg, m)?;
    if frame >= m.frames.len() {
        return Err(SynthError::FrameOutOfRange(frame));
    }
    let deaths = m.deaths_by_slot();
    let hazards = alive_hazards(cfg, m, slot);
    bayes_probability_with(cfg, m, &deaths[slot], &hazards, frame, window)
}

fn bayes_probability_with(
    cfg: &SynthConfig,
    m: &MatchRecord,
    deaths: &[f64],
    hazards: &[f64],
    frame: usize,
    window: f64,
) -> Result<f64, SynthError> {
    let start = m.frames.get(frame).ok_or(SynthError::FrameOutOfRange(frame))?;
    let t = start.game_time;
    let dt = m.tick_interval;
    let tpf = cfg.ticks_per_frame;
    let horizon = t + window;
    let respawn_at = match deaths[..deaths.partition_point(|&tau| tau <= t)].last() {
        Some(&tau) => {
            let g0 = clock_ticks(m.frames[0].game_time, dt);
            let g = clock_ticks(tau, dt);
            let step_start = g0 + (g - g0 - 1) / tpf * tpf;
            step_start + (cfg.respawn_steps() + 1) * tpf
        }
        None => 0,
    };
    let mut survival = 1.0;
    let last = m.frames.len() - 1;
    for (k, f) in m.frames.iter().enumerate().skip(frame) {
        if f.game_time >= horizon || k == last {
            break;
        }
        let g = clock_ticks(f.game_time, dt);
        if f.paused || g < respawn_at {
            continue;
        }
        let ticks = (1..=tpf).filter(|&j| (g + j) as f64 * dt <= horizon).count();
        let h = hazards[k];
        survival *= (1.0 - h).powi(ticks as i32);
    }
    Ok(1.0 - survival)
}

/// Oracle probabilities for every sampled frame of `m` (pauses stripped,
/// then downsampled), paired with the realized labels.
pub fn bayes_scores(
    cfg: &SynthConfig,
    m: &MatchRecord,
    window: f64,
    period_ticks: u64,
) -> Result<(Vec<f64>, Vec<bool>), SynthError> {
    check_tag(cfg, m)?;
    let clean = strip_pauses(m)?;
    let keep = downsample(&clean, period_ticks);
    let labels = label_frames(&clean, window).map_err(|e| match e {
        DatasetError::Match(e) => SynthError::Match(e),
        other => SynthError::InvalidConfig(other.to_string()),
    })?;
    let deaths = clean.deaths_by_slot();
    let hazards: Vec<Vec<f64>> = (0..HERO_COUNT).map(|s| alive_hazards(cfg, &clean, s)).collect();
    let mut scores = Vec::with_capacity(keep.len() * HERO_COUNT);
    let mut flat = Vec::with_capacity(keep.len() * HERO_COUNT);
    for &i in &keep {
        for slot in 0..HERO_COUNT {
            scores.push(bayes_probability_with(cfg, &clean, &deaths[slot], &hazards[slot], i, window)?);
            flat.push(labels[i][slot]);
        }
    }
    Ok((scores, flat))
}

/// Average precision of the oracle over a match set.
pub fn bayes_ap(
    cfg: &SynthConfig,
    matches: &[MatchRecord],
    window: f64,
    period_ticks: u64,
) -> Result<f64, SynthError> {
    let parts = matches
        .par_iter()
        .map(|m| bayes_scores(cfg, m, window, period_ticks))
        .collect::<Result<Vec<_>, _>>()?;
    let (mut s, mut l) = (Vec::new(), Vec::new());
    for (ps, pl) in parts {
        s.extend(ps);
        l.extend(pl);
    }
    Ok(average_precision(&pr_curve(&s, &l)?))
}

/// Generates the whole corpus in parallel; order follows `match_seeds`.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Vec<MatchRecord>, SynthError> {
    cfg.match_seeds()
        .par_iter()
        .map(|&seed| generate_match(cfg, seed))
        .collect()
}

/// Writes `{match_id}.jsonl.gz` per match plus the config sidecar. Returns the ids.
pub fn write_corpus(cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<Vec<String>, SynthError> {
    let dir = dir.as_ref();
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    write_sidecar(cfg, dir)?;
    cfg.match_seeds()
        .par_iter()
        .map(|&seed| {
            let m = generate_match(cfg, seed)?;
            crate::match_data::write_match_file(dir.join(format!("{}.jsonl.gz", m.match_id)), &m)?;
            Ok(m.match_id)
        })
        .collect()
}

pub fn write_sidecar(cfg: &SynthConfig, dir: &Path) -> Result<(), SynthError> {
    let text = format!(
        "# generator_hash = {:016x}\n{}",
        cfg.generator_hash(),
        cfg.to_toml()
    );
    fs::write(dir.join(SIDECAR_FILE), text)?;
    Ok(())
}

pub fn read_sidecar(dir: impl AsRef<Path>) -> Result<SynthConfig, SynthError> {
    SynthConfig::from_toml(&fs::read_to_string(dir.as_ref().join(SIDECAR_FILE))?)
}

/// Generates matches on demand instead of reading files.
pub struct SynthSource {
    cfg: SynthConfig,
}

impl SynthSource {
    pub fn new(cfg: SynthConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        Ok(SynthSource { cfg })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }
}

impl MatchSource for SynthSource {
    fn ids(&self) -> Vec<String> {
        self.cfg
            .match_seeds()
            .into_iter()
            .map(|s| self.cfg.match_id(s))
            .collect()
    }

    fn load(&self, id: &str) -> Result<MatchRecord, DatasetError> {
        let prefix = format!("synth-{:016x}-", self.cfg.generator_hash());
        let seed = id
            .strip_prefix(&prefix)
            .and_then(|hex| u64::from_str_radix(hex, 16).ok())
            .ok_or_else(|| DatasetError::UnknownMatch(id.to_string()))?;
        generate_match(&self.cfg, seed).map_err(|e| DatasetError::Malformed {
            what: id.to_string(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::match_data::validate_match;

    pub(crate) fn short() -> SynthConfig {
        SynthConfig {
            match_count: 4,
            frames: 600,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn valid_and_deterministic() {
        let cfg = short();
        let a = generate_match(&cfg, 11).unwrap();
        let b = generate_match(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert!(validate_match(&a).is_empty(), "{:?}", validate_match(&a));
        assert_ne!(a, generate_match(&cfg, 12).unwrap());
    }

    #[test]
    fn zero_hazard_has_no_deaths() {
        let cfg = SynthConfig {
            hazard: HazardModel::zero(),
            ..short()
        };
        let m = generate_match(&cfg, 3).unwrap();
        assert!(m.deaths.is_empty());
        for k in [0, 100, 599] {
            assert_eq!(bayes_probability(&cfg, &m, k, 4, 5.0).unwrap(), 0.0);
        }
        assert!(matches!(
            bayes_ap(&cfg, &[m], 5.0, 4),
            Err(SynthError::Eval(EvalError::NoPositives))
        ));
    }

    #[test]
    fn pauses_keep_validity() {
        let cfg = SynthConfig {
            pause_probability: 0.01,
            pause_frames: 20,
            ..short()
        };
        let m = generate_match(&cfg, 5).unwrap();
        assert!(m.frames.iter().any(|f| f.paused));
        assert!(validate_match(&m).is_empty());
        let (s, l) = bayes_scores(&cfg, &m, 5.0, 4).unwrap();
        assert_eq!(s.len(), l.len());
    }

    #[test]
    fn foreign_match_rejected() {
        let cfg = short();
        let mut m = generate_match(&cfg, 1).unwrap();
        let other = SynthConfig {
            near_radius: 500.0,
            ..short()
        };
        assert!(matches!(
            bayes_probability(&other, &m, 0, 0, 5.0),
            Err(SynthError::ForeignMatch(..))
        ));
        m.match_id = "real-match".into();
        assert!(matches!(
            bayes_probability(&cfg, &m, 0, 0, 5.0),
            Err(SynthError::ForeignMatch(..))
        ));
    }

    #[test]
    fn hash_ignores_corpus_size_and_seed() {
        let a = short();
        let b = SynthConfig {
            match_count: 99,
            seed: 1234,
            ..short()
        };
        assert_eq!(a.generator_hash(), b.generator_hash());
    }

    #[test]
    fn probability_monotone_in_window() {
        let cfg = short();
        let m = generate_match(&cfg, 9).unwrap();
        for k in (0..600).step_by(37) {
            for slot in 0..HERO_COUNT {
                let mut prev = 0.0;
                for w in [0.5, 1.0, 2.0, 5.0, 10.0] {
                    let p = bayes_probability(&cfg, &m, k, slot, w).unwrap();
                    assert!((0.0..=1.0).contains(&p));
                    assert!(p >= prev);
                    prev = p;
                }
            }
        }
    }

    #[test]
    fn rejects_excessive_hazard() {
        let cfg = SynthConfig {
            hazard: HazardModel {
                base_rate: 0.2,
                ..HazardModel::zero()
            },
            ..short()
        };
        assert!(matches!(cfg.validate(), Err(SynthError::InvalidConfig(_))));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = short();
        write_sidecar(&cfg, dir.path()).unwrap();
        assert_eq!(read_sidecar(dir.path()).unwrap(), cfg);
    }

    #[test]
    fn source_regenerates_by_id() {
        let cfg = short();
        let src = SynthSource::new(cfg.clone()).unwrap();
        let ids = src.ids();
        assert_eq!(ids.len(), 4);
        let m = src.load(&ids[2]).unwrap();
        assert_eq!(m, generate_match(&cfg, cfg.match_seeds()[2]).unwrap());
        assert!(src.load("nope").is_err());
    }
}
