//! Per-hero feature extraction for the minimal, medium and full feature sets,
//! plus min-max normalization pooled across hero slots.
//!
//! Every schema is a subset of the full layout, so extraction always builds
//! the full per-hero vector and then gathers the schema's columns.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::match_data::{
    team_of, MatchRecord, ABILITY_ATTR_COUNT, ABILITY_ATTR_NAMES, DEFAULT_ROSTER_SIZE,
    HERO_COUNT, MAX_ABILITIES, STATE_ATTR_COUNT, STATE_ATTR_NAMES, STATE_HEALTH, STATE_MANA,
    STATE_MAX_HEALTH, STATE_MAX_MANA, STAT_ATTR_COUNT, STAT_ATTR_NAMES, STAT_TOTAL_EARNED_GOLD,
    TEAM_SIZE, TRACKED_ITEMS,
};

pub const ALLY_COUNT: usize = TEAM_SIZE - 1;
pub const ENEMY_COUNT: usize = TEAM_SIZE;
pub const VISIBILITY_SECONDS: usize = 10;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("no frames to compute statistics from")]
    EmptyStream,
    #[error("malformed normalization file at line {line}: {message}")]
    MalformedStats { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaVariant {
    Minimal,
    Medium,
    Full,
}

impl SchemaVariant {
    pub const ALL: [SchemaVariant; 3] = [Self::Minimal, Self::Medium, Self::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Minimal => "minimal",
            Self::Medium => "medium",
            Self::Full => "full",
        }
    }

    /// Stable byte tag used by the binary formats.
    pub fn code(self) -> u8 {
        match self {
            Self::Minimal => 1,
            Self::Medium => 2,
            Self::Full => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.code() == code)
    }
}

impl fmt::Display for SchemaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemaVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "minimal" => Ok(Self::Minimal),
            "medium" => Ok(Self::Medium),
            "full" => Ok(Self::Full),
            other => Err(format!("unknown schema variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Time,
    State,
    Stats,
    Items,
    Abilities,
    HeroId,
    Position,
    Proximity,
    Tower,
    Visibility,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Time => "time",
            Category::State => "state",
            Category::Stats => "stats",
            Category::Items => "items",
            Category::Abilities => "abilities",
            Category::HeroId => "hero_id",
            Category::Position => "position",
            Category::Proximity => "proximity",
            Category::Tower => "tower",
            Category::Visibility => "visibility",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDef {
    pub name: String,
    pub category: Category,
}

/// Column offsets of each block inside the full per-hero layout.
#[derive(Debug, Clone, Copy)]
struct FullLayout {
    time: usize,
    state: usize,
    stats: usize,
    items: usize,
    abilities: usize,
    hero_id: usize,
    position: usize,
    proximity: usize,
    tower: usize,
    visibility: usize,
    len: usize,
}

impl FullLayout {
    fn new(roster_size: usize) -> Self {
        let time = 0;
        let state = time + 1;
        let stats = state + STATE_ATTR_COUNT;
        let items = stats + STAT_ATTR_COUNT;
        let abilities = items + 2 * TRACKED_ITEMS.len();
        let hero_id = abilities + MAX_ABILITIES * ABILITY_ATTR_COUNT;
        let position = hero_id + roster_size;
        let proximity = position + 4;
        let tower = proximity + 2 * (ALLY_COUNT + ENEMY_COUNT);
        let visibility = tower + 4;
        let len = visibility + VISIBILITY_SECONDS;
        FullLayout {
            time,
            state,
            stats,
            items,
            abilities,
            hero_id,
            position,
            proximity,
            tower,
            visibility,
            len,
        }
    }

    fn pos_x(&self) -> usize {
        self.position
    }
    fn pos_x_change(&self) -> usize {
        self.position + 1
    }
    fn pos_y(&self) -> usize {
        self.position + 2
    }
    fn pos_y_change(&self) -> usize {
        self.position + 3
    }
    fn ally_prox(&self, k: usize) -> usize {
        self.proximity + k
    }
    fn ally_prox_change(&self, k: usize) -> usize {
        self.proximity + ALLY_COUNT + k
    }
    fn enemy_prox(&self, k: usize) -> usize {
        self.proximity + 2 * ALLY_COUNT + k
    }
    fn enemy_prox_change(&self, k: usize) -> usize {
        self.proximity + 2 * ALLY_COUNT + ENEMY_COUNT + k
    }
    fn ally_tower(&self) -> usize {
        self.tower
    }
    fn ally_tower_change(&self) -> usize {
        self.tower + 1
    }
    fn enemy_tower(&self) -> usize {
        self.tower + 2
    }
    fn enemy_tower_change(&self) -> usize {
        self.tower + 3
    }

    fn defs(&self, roster_size: usize) -> Vec<FeatureDef> {
        let mut defs = Vec::with_capacity(self.len);
        let mut add = |name: String, category| defs.push(FeatureDef { name, category });
        add("time".into(), Category::Time);
        for n in STATE_ATTR_NAMES {
            add(format!("state.{n}"), Category::State);
        }
        for n in STAT_ATTR_NAMES {
            add(format!("stats.{n}"), Category::Stats);
        }
        for n in TRACKED_ITEMS {
            add(format!("item.{n}.owned"), Category::Items);
            add(format!("item.{n}.cooldown"), Category::Items);
        }
        for a in 0..MAX_ABILITIES {
            for n in ABILITY_ATTR_NAMES {
                add(format!("ability{a}.{n}"), Category::Abilities);
            }
        }
        for h in 0..roster_size {
            add(format!("hero_id.{h}"), Category::HeroId);
        }
        add("pos.x".into(), Category::Position);
        add("pos.x.change".into(), Category::Position);
        add("pos.y".into(), Category::Position);
        add("pos.y.change".into(), Category::Position);
        for k in 1..=ALLY_COUNT {
            add(format!("ally_prox.{k}"), Category::Proximity);
        }
        for k in 1..=ALLY_COUNT {
            add(format!("ally_prox.{k}.change"), Category::Proximity);
        }
        for k in 1..=ENEMY_COUNT {
            add(format!("enemy_prox.{k}"), Category::Proximity);
        }
        for k in 1..=ENEMY_COUNT {
            add(format!("enemy_prox.{k}.change"), Category::Proximity);
        }
        add("ally_tower_prox".into(), Category::Tower);
        add("ally_tower_prox.change".into(), Category::Tower);
        add("enemy_tower_prox".into(), Category::Tower);
        add("enemy_tower_prox.change".into(), Category::Tower);
        for s in 1..=VISIBILITY_SECONDS {
            add(format!("visible.{s}s_ago"), Category::Visibility);
        }
        debug_assert_eq!(defs.len(), self.len);
        defs
    }
}

/// Ordered per-hero feature layout of one feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    variant: SchemaVariant,
    roster_size: usize,
    features: Vec<FeatureDef>,
    /// Column of each feature inside the full layout.
    columns: Vec<usize>,
}

impl FeatureSchema {
    pub fn new(variant: SchemaVariant) -> Self {
        Self::with_roster(variant, DEFAULT_ROSTER_SIZE)
    }

    pub fn with_roster(variant: SchemaVariant, roster_size: usize) -> Self {
        let layout = FullLayout::new(roster_size);
        let all = layout.defs(roster_size);
        let columns: Vec<usize> = match variant {
            SchemaVariant::Full => (0..layout.len).collect(),
            SchemaVariant::Medium => (0..layout.len)
                .filter(|&c| {
                    !matches!(all[c].category, Category::HeroId | Category::Abilities)
                })
                .collect(),
            SchemaVariant::Minimal => {
                let mut cols = vec![
                    layout.state + STATE_HEALTH,
                    layout.stats + STAT_TOTAL_EARNED_GOLD,
                    layout.pos_x(),
                    layout.pos_y(),
                ];
                cols.extend((0..ALLY_COUNT).map(|k| layout.ally_prox(k)));
                cols.extend((0..ENEMY_COUNT).map(|k| layout.enemy_prox(k)));
                cols.push(layout.ally_tower());
                cols.push(layout.enemy_tower());
                cols
            }
        };
        let features = columns.iter().map(|&c| all[c].clone()).collect();
        FeatureSchema {
            variant,
            roster_size,
            features,
            columns,
        }
    }

    pub fn variant(&self) -> SchemaVariant {
        self.variant
    }

    pub fn roster_size(&self) -> usize {
        self.roster_size
    }

    pub fn per_hero_count(&self) -> usize {
        self.features.len()
    }

    pub fn frame_width(&self) -> usize {
        HERO_COUNT * self.per_hero_count()
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Numbered listing, one feature per line: `index<TAB>name<TAB>category`.
    pub fn dump(&self) -> String {
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{}\t{}\t{}\n", i + 1, f.name, f.category.as_str()))
            .collect()
    }

    /// Columns of the full layout read by this schema.
    pub(crate) fn columns(&self) -> &[usize] {
        &self.columns
    }
}

/// One extracted frame: 10 per-hero vectors stored contiguously in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub game_time: f64,
    per_hero_count: usize,
    values: Vec<f64>,
}

impl FrameFeatures {
    pub fn new(game_time: f64, per_hero_count: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), HERO_COUNT * per_hero_count);
        FrameFeatures {
            game_time,
            per_hero_count,
            values,
        }
    }

    pub fn per_hero_count(&self) -> usize {
        self.per_hero_count
    }

    pub fn hero(&self, slot: usize) -> &[f64] {
        &self.values[slot * self.per_hero_count..(slot + 1) * self.per_hero_count]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy)]
struct PrevSample {
    time: f64,
    pos: [[f64; 2]; HERO_COUNT],
    ally: [[f64; ALLY_COUNT]; HERO_COUNT],
    enemy: [[f64; ENEMY_COUNT]; HERO_COUNT],
    tower: [[f64; 2]; HERO_COUNT],
}

/// Order-dependent state carried between consecutive extracted samples.
#[derive(Debug, Clone, Default)]
pub struct HistoryState {
    prev: Option<PrevSample>,
    /// Whole game-clock second of bucket 0 of the visibility ring.
    current_second: Option<i64>,
    /// `visibility[slot][k]`: visible to the enemy at any point during second `current - k`.
    visibility: [[bool; VISIBILITY_SECONDS]; HERO_COUNT],
    frames_without_towers: usize,
}

impl HistoryState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn visibility_flags(&self, slot: usize) -> &[bool; VISIBILITY_SECONDS] {
        &self.visibility[slot]
    }

    /// Count of extracted frames that carried no tower data.
    pub fn frames_without_towers(&self) -> usize {
        self.frames_without_towers
    }

    fn push_visibility(&mut self, game_time: f64, visible: [bool; HERO_COUNT]) {
        let second = game_time.floor() as i64;
        match self.current_second {
            Some(cur) if second > cur => {
                let shift = (second - cur).min(VISIBILITY_SECONDS as i64) as usize;
                for ring in &mut self.visibility {
                    ring.rotate_right(shift);
                    ring[..shift].fill(false);
                }
                self.current_second = Some(second);
            }
            Some(_) => {}
            None => self.current_second = Some(second),
        }
        for (ring, v) in self.visibility.iter_mut().zip(visible) {
            ring[0] |= v;
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Extracts one frame and advances `hist`.
///
/// `hist` must have seen exactly the previously extracted frames of this
/// match, in order (or be fresh for the first one).
pub fn extract_frame(
    m: &MatchRecord,
    frame_index: usize,
    schema: &FeatureSchema,
    hist: &mut HistoryState,
) -> Result<FrameFeatures, FeatureError> {
    if m.roster_size != schema.roster_size() {
        return Err(FeatureError::SchemaMismatch(format!(
            "match roster size {} but schema one-hot width {}",
            m.roster_size,
            schema.roster_size()
        )));
    }
    let frame = m.frames.get(frame_index).ok_or_else(|| {
        FeatureError::InvalidFrame(format!(
            "frame {frame_index} out of range ({} frames)",
            m.frames.len()
        ))
    })?;
    if frame.heroes.len() != HERO_COUNT {
        return Err(FeatureError::InvalidFrame(format!(
            "frame {frame_index} has {} heroes",
            frame.heroes.len()
        )));
    }
    let heroes = frame.by_slot();
    let layout = FullLayout::new(m.roster_size);
    let t = frame.game_time;

    let pos: [[f64; 2]; HERO_COUNT] = std::array::from_fn(|s| [heroes[s].pos_x, heroes[s].pos_y]);
    let mut ally = [[0.0; ALLY_COUNT]; HERO_COUNT];
    let mut enemy = [[0.0; ENEMY_COUNT]; HERO_COUNT];
    for s in 0..HERO_COUNT {
        let (mut na, mut ne) = (0, 0);
        for o in 0..HERO_COUNT {
            if o == s {
                continue;
            }
            let d = dist(pos[s], pos[o]);
            if team_of(o) == team_of(s) {
                ally[s][na] = d;
                na += 1;
            } else {
                enemy[s][ne] = d;
                ne += 1;
            }
        }
        ally[s].sort_by(f64::total_cmp);
        enemy[s].sort_by(f64::total_cmp);
    }

    let mut tower = [[0.0; 2]; HERO_COUNT];
    match &frame.towers {
        Some(towers) => {
            for s in 0..HERO_COUNT {
                let team = team_of(s);
                let nearest = |own: bool| {
                    towers
                        .iter()
                        .filter(|tw| tw.alive && (tw.team == team) == own)
                        .map(|tw| dist(pos[s], [tw.x, tw.y]))
                        .min_by(f64::total_cmp)
                        .unwrap_or(0.0)
                };
                tower[s] = [nearest(true), nearest(false)];
            }
        }
        None => {
            if hist.frames_without_towers == 0 {
                log::warn!(
                    "match {}: frame {frame_index} has no tower data, tower features set to 0",
                    m.match_id
                );
            }
            hist.frames_without_towers += 1;
        }
    }

    hist.push_visibility(t, std::array::from_fn(|s| heroes[s].visible_to_enemy));

    let prev = hist.prev;
    let rate = |cur: f64, old: f64, prev_time: f64| {
        let dt = t - prev_time;
        if dt > 0.0 {
            (cur - old) / dt
        } else {
            0.0
        }
    };

    let columns = schema.columns();
    let n = columns.len();
    let mut values = Vec::with_capacity(HERO_COUNT * n);
    let mut full = vec![0.0; layout.len];
    for s in 0..HERO_COUNT {
        let h = heroes[s];
        full.fill(0.0);
        full[layout.time] = t;
        full[layout.state..layout.state + STATE_ATTR_COUNT].copy_from_slice(&h.state_attrs);
        full[layout.state + STATE_HEALTH] = h.health;
        full[layout.state + STATE_MAX_HEALTH] = h.max_health;
        full[layout.state + STATE_MANA] = h.mana;
        full[layout.state + STATE_MAX_MANA] = h.max_mana;
        full[layout.stats..layout.stats + STAT_ATTR_COUNT].copy_from_slice(&h.stat_attrs);
        for item in &h.items {
            let base = layout.items + 2 * item.item_id as usize;
            full[base] = 1.0;
            full[base + 1] = item.cooldown;
        }
        for (a, attrs) in h.abilities.iter().enumerate().take(MAX_ABILITIES) {
            let base = layout.abilities + a * ABILITY_ATTR_COUNT;
            full[base..base + ABILITY_ATTR_COUNT].copy_from_slice(attrs);
        }
        if (h.hero_id as usize) < m.roster_size {
            full[layout.hero_id + h.hero_id as usize] = 1.0;
        } else {
            return Err(FeatureError::InvalidFrame(format!(
                "hero id {} outside roster",
                h.hero_id
            )));
        }
        full[layout.pos_x()] = pos[s][0];
        full[layout.pos_y()] = pos[s][1];
        for k in 0..ALLY_COUNT {
            full[layout.ally_prox(k)] = ally[s][k];
        }
        for k in 0..ENEMY_COUNT {
            full[layout.enemy_prox(k)] = enemy[s][k];
        }
        full[layout.ally_tower()] = tower[s][0];
        full[layout.enemy_tower()] = tower[s][1];
        if let Some(p) = &prev {
            full[layout.pos_x_change()] = rate(pos[s][0], p.pos[s][0], p.time);
            full[layout.pos_y_change()] = rate(pos[s][1], p.pos[s][1], p.time);
            for k in 0..ALLY_COUNT {
                full[layout.ally_prox_change(k)] = rate(ally[s][k], p.ally[s][k], p.time);
            }
            for k in 0..ENEMY_COUNT {
                full[layout.enemy_prox_change(k)] = rate(enemy[s][k], p.enemy[s][k], p.time);
            }
            full[layout.ally_tower_change()] = rate(tower[s][0], p.tower[s][0], p.time);
            full[layout.enemy_tower_change()] = rate(tower[s][1], p.tower[s][1], p.time);
        }
        for (k, &v) in hist.visibility[s].iter().enumerate() {
            full[layout.visibility + k] = if v { 1.0 } else { 0.0 };
        }
        values.extend(columns.iter().map(|&c| full[c]));
    }

    if values.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::InvalidFrame(format!(
            "frame {frame_index} produced non-finite features"
        )));
    }

    hist.prev = Some(PrevSample {
        time: t,
        pos,
        ally,
        enemy,
        tower,
    });
    Ok(FrameFeatures::new(t, n, values))
}

/// Extracts the given frames in order with a fresh history.
pub fn extract_frames(
    m: &MatchRecord,
    frame_indices: &[usize],
    schema: &FeatureSchema,
) -> Result<Vec<FrameFeatures>, FeatureError> {
    let mut hist = HistoryState::new();
    frame_indices
        .iter()
        .map(|&i| extract_frame(m, i, schema, &mut hist))
        .collect()
}

/// Per-feature min/max pooled over all heroes and frames of a training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub variant: SchemaVariant,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Running min/max; partial accumulators merge associatively.
#[derive(Debug, Clone)]
pub struct NormAccumulator {
    min: Vec<f64>,
    max: Vec<f64>,
    frames: usize,
}

impl NormAccumulator {
    pub fn new(per_hero_count: usize) -> Self {
        NormAccumulator {
            min: vec![f64::INFINITY; per_hero_count],
            max: vec![f64::NEG_INFINITY; per_hero_count],
            frames: 0,
        }
    }

    pub fn observe(&mut self, f: &FrameFeatures) -> Result<(), FeatureError> {
        if f.per_hero_count() != self.min.len() {
            return Err(FeatureError::SchemaMismatch(format!(
                "frame has {} features per hero, accumulator {}",
                f.per_hero_count(),
                self.min.len()
            )));
        }
        for slot in 0..HERO_COUNT {
            for (k, &v) in f.hero(slot).iter().enumerate() {
                self.min[k] = self.min[k].min(v);
                self.max[k] = self.max[k].max(v);
            }
        }
        self.frames += 1;
        Ok(())
    }

    pub fn merge(mut self, other: NormAccumulator) -> Self {
        for k in 0..self.min.len() {
            self.min[k] = self.min[k].min(other.min[k]);
            self.max[k] = self.max[k].max(other.max[k]);
        }
        self.frames += other.frames;
        self
    }

    pub fn finish(self, variant: SchemaVariant) -> Result<NormalizationStats, FeatureError> {
        if self.frames == 0 {
            return Err(FeatureError::EmptyStream);
        }
        Ok(NormalizationStats {
            variant,
            min: self.min,
            max: self.max,
        })
    }
}

pub fn compute_norm_stats<'a>(
    variant: SchemaVariant,
    samples: impl IntoIterator<Item = &'a FrameFeatures>,
) -> Result<NormalizationStats, FeatureError> {
    let mut iter = samples.into_iter().peekable();
    let n = iter
        .peek()
        .map(|f| f.per_hero_count())
        .ok_or(FeatureError::EmptyStream)?;
    let mut acc = NormAccumulator::new(n);
    for f in iter {
        acc.observe(f)?;
    }
    acc.finish(variant)
}

impl NormalizationStats {
    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    /// Scales one value of feature `k` into [0, 1]; constant features map to 0.
    #[inline]
    pub fn scale(&self, k: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[k], self.max[k]);
        if hi > lo {
            ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn write<W: Write>(&self, schema: &FeatureSchema, mut w: W) -> Result<(), FeatureError> {
        if schema.per_hero_count() != self.len() {
            return Err(FeatureError::SchemaMismatch(format!(
                "schema has {} features, stats {}",
                schema.per_hero_count(),
                self.len()
            )));
        }
        writeln!(w, "# schema\t{}\t{}", self.variant, self.len())?;
        for ((name, lo), hi) in schema.names().zip(&self.min).zip(&self.max) {
            writeln!(w, "{name}\t{lo}\t{hi}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, FeatureError> {
        let bad = |line: usize, message: &str| FeatureError::MalformedStats {
            line,
            message: message.to_string(),
        };
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))??;
        let parts: Vec<&str> = header.split('\t').collect();
        if parts.len() != 3 || parts[0] != "# schema" {
            return Err(bad(1, "expected `# schema<TAB>variant<TAB>count`"));
        }
        let variant: SchemaVariant = parts[1].parse().map_err(|e: String| bad(1, &e))?;
        let count: usize = parts[2].parse().map_err(|_| bad(1, "bad feature count"))?;
        let mut min = Vec::with_capacity(count);
        let mut max = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad(i + 2, "expected name<TAB>min<TAB>max"));
            }
            let lo: f64 = cols[1].parse().map_err(|_| bad(i + 2, "bad min"))?;
            let hi: f64 = cols[2].parse().map_err(|_| bad(i + 2, "bad max"))?;
            if lo > hi {
                return Err(bad(i + 2, "min exceeds max"));
            }
            min.push(lo);
            max.push(hi);
        }
        if min.len() != count {
            return Err(bad(count + 1, "feature count does not match header"));
        }
        Ok(NormalizationStats { variant, min, max })
    }
}

/// Min-max scales every value of `f`; values outside the corpus range are clamped.
pub fn normalize(
    f: &FrameFeatures,
    s: &NormalizationStats,
) -> Result<FrameFeatures, FeatureError> {
    let n = f.per_hero_count();
    if n != s.len() {
        return Err(FeatureError::SchemaMismatch(format!(
            "frame has {n} features per hero, stats {}",
            s.len()
        )));
    }
    let values = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| s.scale(i % n, x))
        .collect();
    Ok(FrameFeatures::new(f.game_time, n, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::match_data::tests::simple_match;
    use crate::match_data::Tower;

    #[test]
    fn schema_sizes() {
        assert_eq!(FeatureSchema::new(SchemaVariant::Full).per_hero_count(), 287);
        assert_eq!(FeatureSchema::new(SchemaVariant::Medium).per_hero_count(), 109);
        assert_eq!(FeatureSchema::new(SchemaVariant::Minimal).per_hero_count(), 15);
        assert_eq!(FeatureSchema::new(SchemaVariant::Full).frame_width(), 2870);
    }

    #[test]
    fn full_block_sizes_add_up() {
        let schema = FeatureSchema::new(SchemaVariant::Full);
        let count = |c: Category| schema.features().iter().filter(|f| f.category == c).count();
        assert_eq!(count(Category::Time), 1);
        assert_eq!(count(Category::State), 21);
        assert_eq!(count(Category::Stats), 17);
        assert_eq!(count(Category::Items), 34);
        assert_eq!(count(Category::Abilities), 48);
        assert_eq!(count(Category::HeroId), 130);
        assert_eq!(count(Category::Position), 4);
        assert_eq!(count(Category::Proximity), 18);
        assert_eq!(count(Category::Tower), 4);
        assert_eq!(count(Category::Visibility), 10);
    }

    #[test]
    fn minimal_names() {
        let schema = FeatureSchema::new(SchemaVariant::Minimal);
        let names: Vec<&str> = schema.names().collect();
        assert_eq!(names[0], "state.Health");
        assert_eq!(names[1], "stats.TotalEarnedGold");
        assert_eq!(&names[2..4], &["pos.x", "pos.y"]);
        assert_eq!(names[13], "ally_tower_prox");
        assert_eq!(names[14], "enemy_tower_prox");
    }

    #[test]
    fn three_four_five_enemy_distance() {
        let mut m = simple_match(1);
        for h in &mut m.frames[0].heroes {
            h.pos_x = 1000.0;
            h.pos_y = 1000.0;
        }
        m.frames[0].heroes[0].pos_x = 0.0;
        m.frames[0].heroes[0].pos_y = 0.0;
        m.frames[0].heroes[5].pos_x = 3.0;
        m.frames[0].heroes[5].pos_y = 4.0;
        let schema = FeatureSchema::new(SchemaVariant::Minimal);
        let f = extract_frame(&m, 0, &schema, &mut HistoryState::new()).unwrap();
        // enemy_prox.1 is column 8 of the minimal layout
        assert_eq!(f.hero(0)[8], 5.0);
        assert_eq!(f.hero(5)[8], 5.0);
    }

    #[test]
    fn first_sample_changes_are_zero() {
        let m = simple_match(2);
        let schema = FeatureSchema::new(SchemaVariant::Full);
        let f = extract_frame(&m, 0, &schema, &mut HistoryState::new()).unwrap();
        for (k, def) in schema.features().iter().enumerate() {
            if def.name.ends_with(".change") {
                for s in 0..HERO_COUNT {
                    assert_eq!(f.hero(s)[k], 0.0, "{}", def.name);
                }
            }
        }
    }

    #[test]
    fn change_is_per_second_difference() {
        let mut m = simple_match(2);
        m.frames[1].heroes[3].pos_x += 20.0;
        let schema = FeatureSchema::new(SchemaVariant::Full);
        let fs = extract_frames(&m, &[0, 1], &schema).unwrap();
        let k = schema.names().position(|n| n == "pos.x.change").unwrap();
        let dt = m.frames[1].game_time - m.frames[0].game_time;
        assert!((fs[1].hero(3)[k] - 20.0 / dt).abs() < 1e-9);
        assert_eq!(fs[1].hero(2)[k], 0.0);
    }

    #[test]
    fn one_hot_and_items() {
        let m = simple_match(1);
        let schema = FeatureSchema::new(SchemaVariant::Full);
        let f = extract_frame(&m, 0, &schema, &mut HistoryState::new()).unwrap();
        for s in 0..HERO_COUNT {
            let ones: Vec<usize> = schema
                .features()
                .iter()
                .enumerate()
                .filter(|(k, d)| d.category == Category::HeroId && f.hero(s)[*k] != 0.0)
                .map(|(k, _)| k)
                .collect();
            assert_eq!(ones.len(), 1);
            assert_eq!(schema.features()[ones[0]].name, format!("hero_id.{}", s * 3));
        }
        let owned = schema.names().position(|n| n == "item.magic_wand.owned").unwrap();
        assert_eq!(f.hero(0)[owned], 1.0);
        assert_eq!(f.hero(0)[owned + 1], 1.5);
        let blink = schema.names().position(|n| n == "item.blink_dagger.cooldown").unwrap();
        assert_eq!(f.hero(0)[blink], 0.0);
        // second ability slot is zero padded
        let a1 = schema.names().position(|n| n == "ability1.Level").unwrap();
        assert_eq!(f.hero(0)[a1], 0.0);
    }

    #[test]
    fn roster_mismatch() {
        let mut m = simple_match(1);
        m.roster_size = 120;
        let schema = FeatureSchema::new(SchemaVariant::Full);
        assert!(matches!(
            extract_frame(&m, 0, &schema, &mut HistoryState::new()),
            Err(FeatureError::SchemaMismatch(_))
        ));
        assert!(matches!(
            extract_frame(&simple_match(1), 3, &schema, &mut HistoryState::new()),
            Err(FeatureError::InvalidFrame(_))
        ));
    }

    #[test]
    fn towers_nearest_alive() {
        let mut m = simple_match(1);
        m.frames[0].towers = Some(vec![
            Tower { team: 0, x: 0.0, y: 50.0, alive: false },
            Tower { team: 0, x: 0.0, y: 150.0, alive: true },
            Tower { team: 1, x: 0.0, y: 90.0, alive: true },
        ]);
        let schema = FeatureSchema::new(SchemaVariant::Minimal);
        let f = extract_frame(&m, 0, &schema, &mut HistoryState::new()).unwrap();
        // hero 0 sits at (0, 50)
        assert_eq!(f.hero(0)[13], 100.0);
        assert_eq!(f.hero(0)[14], 40.0);
        // hero 5 at (500, 50): ally towers are team 1
        assert!((f.hero(5)[13] - (500f64.powi(2) + 40f64.powi(2)).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn visibility_ring_tracks_whole_seconds() {
        let mut m = simple_match(1);
        let base = m.frames[0].clone();
        m.frames.clear();
        // visible at t = 0.5 and 3.2, invisible otherwise
        for (i, t) in [0.0, 0.5, 1.0, 2.0, 3.2, 4.0].iter().enumerate() {
            let mut f = base.clone();
            f.tick = i as u64;
            f.game_time = *t;
            f.heroes[1].visible_to_enemy = *t == 0.5 || *t == 3.2;
            m.frames.push(f);
        }
        let mut hist = HistoryState::new();
        for i in 0..m.frames.len() {
            extract_frame(&m, i, &FeatureSchema::new(SchemaVariant::Medium), &mut hist).unwrap();
        }
        let flags = hist.visibility_flags(1);
        assert_eq!(
            flags,
            &[false, true, false, false, true, false, false, false, false, false]
        );
        assert_eq!(hist.visibility_flags(0), &[false; 10]);
    }

    #[test]
    fn norm_stats_and_normalize() {
        let f1 = FrameFeatures::new(0.0, 1, vec![2.0; 10]);
        let mut v = vec![5.0; 10];
        v[3] = 8.0;
        let f2 = FrameFeatures::new(1.0, 1, v);
        let s = compute_norm_stats(SchemaVariant::Minimal, [&f1, &f2]).unwrap();
        assert_eq!((s.min[0], s.max[0]), (2.0, 8.0));
        let n = normalize(&f2, &s).unwrap();
        assert_eq!(n.hero(3)[0], 1.0);
        assert_eq!(normalize(&f1, &s).unwrap().hero(0)[0], 0.0);
        let outside = FrameFeatures::new(0.0, 1, vec![100.0; 10]);
        assert_eq!(normalize(&outside, &s).unwrap().hero(0)[0], 1.0);

        let single = compute_norm_stats(SchemaVariant::Minimal, [&f1]).unwrap();
        assert_eq!((single.min[0], single.max[0]), (2.0, 2.0));
        assert_eq!(normalize(&f1, &single).unwrap().hero(0)[0], 0.0);

        let unit = NormalizationStats {
            variant: SchemaVariant::Minimal,
            min: vec![0.0],
            max: vec![1.0],
        };
        let x = FrameFeatures::new(0.0, 1, (0..10).map(|i| i as f64 / 10.0).collect());
        assert_eq!(normalize(&x, &unit).unwrap(), x);

        let empty: [&FrameFeatures; 0] = [];
        assert!(matches!(
            compute_norm_stats(SchemaVariant::Minimal, empty),
            Err(FeatureError::EmptyStream)
        ));
        let wide = FrameFeatures::new(0.0, 2, vec![0.0; 20]);
        assert!(matches!(normalize(&wide, &s), Err(FeatureError::SchemaMismatch(_))));
    }

    #[test]
    fn stats_text_round_trip() {
        let schema = FeatureSchema::new(SchemaVariant::Minimal);
        let stats = NormalizationStats {
            variant: SchemaVariant::Minimal,
            min: (0..15).map(|i| i as f64 * 0.1 - 3.3).collect(),
            max: (0..15).map(|i| i as f64 * 1.7 + 1e-7).collect(),
        };
        let mut buf = Vec::new();
        stats.write(&schema, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema\tminimal\t15\n"));
        assert_eq!(text.lines().count(), 16);
        let back = NormalizationStats::read(&buf[..]).unwrap();
        assert_eq!(back, stats);
    }
}
