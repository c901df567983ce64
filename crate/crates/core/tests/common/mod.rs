//! Random instance builders shared by the integration tests.
#![allow(dead_code)]

use death_forecast::dataset::{LabeledSample, Shard};
use death_forecast::features::{FeatureSchema, NormalizationStats, SchemaVariant};
use death_forecast::match_data::{
    DeathEvent, HeroSnapshot, ItemSlot, MatchRecord, TickFrame, Tower, ABILITY_ATTR_COUNT,
    HERO_COUNT, MAX_ABILITIES, STAT_ATTR_COUNT, STATE_ATTR_COUNT, TRACKED_ITEMS,
};
use death_forecast::model::{init_params, Checkpoint, ModelConfig};
use rand::seq::SliceRandom;
use rand::Rng;

fn real<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    // mix of awkward magnitudes, exact zeros and integers
    match rng.random_range(0..4) {
        0 => 0.0,
        1 => rng.random_range(0..1000) as f64,
        _ => (rng.random::<f64>() - 0.5) * scale,
    }
}

fn hero<R: Rng>(rng: &mut R, slot: usize, hero_id: u16) -> HeroSnapshot {
    let max_health = rng.random_range(1.0..5000.0);
    let max_mana = rng.random_range(0.0..2000.0);
    let mut item_ids: Vec<u8> = (0..TRACKED_ITEMS.len() as u8).collect();
    item_ids.shuffle(rng);
    let n_items = rng.random_range(0..=6);
    HeroSnapshot {
        slot: slot as u8,
        hero_id,
        alive: rng.random_bool(0.9),
        health: max_health * rng.random::<f64>(),
        max_health,
        mana: max_mana * rng.random::<f64>(),
        max_mana,
        pos_x: real(rng, 16000.0),
        pos_y: real(rng, 16000.0),
        visible_to_enemy: rng.random(),
        state_attrs: (0..STATE_ATTR_COUNT).map(|_| real(rng, 500.0)).collect(),
        stat_attrs: (0..STAT_ATTR_COUNT).map(|_| real(rng, 1e5)).collect(),
        items: item_ids[..n_items]
            .iter()
            .map(|&item_id| ItemSlot {
                item_id,
                cooldown: rng.random_range(0.0..60.0),
            })
            .collect(),
        abilities: (0..rng.random_range(0..=MAX_ABILITIES))
            .map(|_| std::array::from_fn::<f64, ABILITY_ATTR_COUNT, _>(|_| real(rng, 100.0)))
            .collect(),
    }
}

/// A small match satisfying every format invariant.
pub fn random_match<R: Rng>(rng: &mut R, index: usize) -> MatchRecord {
    let roster_size = rng.random_range(HERO_COUNT..300);
    let hero_ids: Vec<u16> = rand::seq::index::sample(rng, roster_size, HERO_COUNT)
        .into_iter()
        .map(|i| i as u16)
        .collect();
    let tick_interval = if rng.random_bool(0.5) { 1.0 / 30.0 } else { rng.random_range(0.01..0.1) };
    let with_towers = rng.random_bool(0.5);
    let n_frames = rng.random_range(1..6);
    let mut tick = rng.random_range(0..10_000u64);
    let mut time = rng.random_range(-90.0..600.0);
    let mut frames = Vec::new();
    for _ in 0..n_frames {
        let paused = !frames.is_empty() && rng.random_bool(0.2);
        if !paused {
            time += rng.random_range(0.01..1.0);
        }
        tick += rng.random_range(1..8);
        let mut heroes: Vec<HeroSnapshot> = (0..HERO_COUNT).map(|s| hero(rng, s, hero_ids[s])).collect();
        heroes.shuffle(rng);
        frames.push(TickFrame {
            tick,
            game_time: time,
            paused,
            heroes,
            towers: with_towers.then(|| {
                (0..rng.random_range(0..8))
                    .map(|_| Tower {
                        team: rng.random_range(0..2),
                        x: real(rng, 16000.0),
                        y: real(rng, 16000.0),
                        alive: rng.random(),
                    })
                    .collect()
            }),
        });
    }
    let first = frames[0].game_time;
    let last = frames.last().unwrap().game_time;
    let mut deaths = Vec::new();
    for slot in 0..HERO_COUNT as u8 {
        let mut times: Vec<f64> = (0..rng.random_range(0..3))
            .map(|_| rng.random_range(first..=last))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        deaths.extend(times.into_iter().map(|time| DeathEvent { slot, time }));
    }
    deaths.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.slot.cmp(&b.slot)));
    MatchRecord {
        match_id: format!("rand-{index}-{}", rng.random::<u32>()),
        tick_interval,
        roster_size,
        frames,
        deaths,
    }
}

pub fn random_variant<R: Rng>(rng: &mut R) -> SchemaVariant {
    SchemaVariant::ALL[rng.random_range(0..3)]
}

pub fn random_samples<R: Rng>(rng: &mut R, variant: SchemaVariant, n: usize) -> Vec<LabeledSample> {
    let width = FeatureSchema::new(variant).frame_width();
    (0..n)
        .map(|_| LabeledSample {
            features: (0..width).map(|_| rng.random::<f32>()).collect(),
            labels: std::array::from_fn(|_| rng.random_bool(0.2)),
            match_hash: rng.random(),
            game_time: rng.random_range(-90.0..3600.0),
        })
        .collect()
}

pub fn random_shard<R: Rng>(rng: &mut R) -> Shard {
    let variant = random_variant(rng);
    let n = rng.random_range(0..40);
    Shard {
        variant,
        per_hero_count: FeatureSchema::new(variant).per_hero_count(),
        samples: random_samples(rng, variant, n),
    }
}

pub fn random_stats<R: Rng>(rng: &mut R, variant: SchemaVariant) -> NormalizationStats {
    let n = FeatureSchema::new(variant).per_hero_count();
    let min: Vec<f64> = (0..n).map(|_| real(rng, 100.0)).collect();
    let max = min.iter().map(|m| m + rng.random_range(0.0..50.0)).collect();
    NormalizationStats { variant, min, max }
}

pub fn random_checkpoint<R: Rng>(rng: &mut R) -> Checkpoint {
    let variant = random_variant(rng);
    let layers = |rng: &mut R, lo: usize| -> Vec<usize> {
        (0..rng.random_range(lo..4)).map(|_| rng.random_range(1..12)).collect()
    };
    let config = ModelConfig {
        shared_layers: layers(rng, 1),
        final_layers: layers(rng, 0),
        learning_rate: rng.random_range(1e-6..1e-2),
        batch_size: rng.random_range(2..512),
        seed: rng.random(),
        window_seconds: rng.random_range(1.0..20.0),
        ..ModelConfig::for_variant(variant)
    };
    let params = init_params::<f32>(&config, rng.random()).unwrap();
    Checkpoint {
        stats: random_stats(rng, variant),
        step: rng.random_range(0..1_000_000),
        config,
        params,
    }
}
