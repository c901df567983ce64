//! Match time-series records and their line-delimited text format.
//!
//! A match file is UTF-8 text with one JSON object per line:
//!
//! ```text
//! {"match_id":"m1","tick_interval":0.0333,"roster_size":130,"hero_ids":[..10 ids..]}
//! {"tick":0,"game_time":0.0,"paused":false,"heroes":[..10 snapshots..],"towers":[..]}
//! ...one line per frame...
//! {"deaths":[{"slot":3,"time":12.41}]}
//! ```
//!
//! The `towers` key is optional per frame. Files may be gzip-compressed; the
//! reader sniffs the magic bytes and decompresses transparently.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::bufread::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HERO_COUNT: usize = 10;
pub const TEAM_SIZE: usize = 5;
pub const STATE_ATTR_COUNT: usize = 21;
pub const STAT_ATTR_COUNT: usize = 17;
pub const MAX_ABILITIES: usize = 8;
pub const ABILITY_ATTR_COUNT: usize = 6;
pub const DEFAULT_TICK_INTERVAL: f64 = 1.0 / 30.0;
pub const DEFAULT_ROSTER_SIZE: usize = 130;

/// Hero state attributes, in file order.
pub const STATE_ATTR_NAMES: [&str; STATE_ATTR_COUNT] = [
    "Agility",
    "AgilityTotal",
    "Intellect",
    "IntellectTotal",
    "Strength",
    "StrengthTotal",
    "MagicalResistanceValue",
    "PhysicalArmorValue",
    "Mana",
    "MaxMana",
    "TauntCooldown",
    "BKBChargesUsed",
    "AbilityPoints",
    "PrimaryAttribute",
    "MoveSpeed",
    "Health",
    "MaxHealth",
    "DamageMax",
    "DamageMin",
    "lifeState",
    "TaggedAsVisibleByTeam",
];

/// Hero statistics attributes, in file order.
pub const STAT_ATTR_NAMES: [&str; STAT_ATTR_COUNT] = [
    "FirstBloodClaimed",
    "TeamFightParticipation",
    "Level",
    "Kills",
    "Deaths",
    "Assists",
    "ObserverWardsPlaced",
    "SentryWardsPlaced",
    "CreepsStacked",
    "CampsStacked",
    "RunePickups",
    "TowerKills",
    "RoshanKills",
    "TotalEarnedGold",
    "LastHitCount",
    "TotalEarnedXP",
    "Stuns",
];

pub const STATE_MANA: usize = 8;
pub const STATE_MAX_MANA: usize = 9;
pub const STATE_HEALTH: usize = 15;
pub const STATE_MAX_HEALTH: usize = 16;
pub const STAT_TOTAL_EARNED_GOLD: usize = 13;

pub const ABILITY_ATTR_NAMES: [&str; ABILITY_ATTR_COUNT] = [
    "Level",
    "CastRange",
    "ManaCost",
    "Cooldown",
    "Activated",
    "ToggleState",
];

/// The tracked activatable items; `item_id` indexes this list.
pub const TRACKED_ITEMS: [&str; 17] = [
    "blink_dagger",
    "black_king_bar",
    "magic_wand",
    "quelling_blade",
    "power_treads",
    "hand_of_midas",
    "hurricane_pike",
    "force_staff",
    "abyssal_blade",
    "mask_of_madness",
    "nullifier",
    "travel_boots",
    "dagon_5",
    "lotus_orb",
    "tpscroll",
    "smoke_of_deceit",
    "clarity",
];

/// Team of a hero slot: slots 0-4 are team 0, 5-9 are team 1.
pub fn team_of(slot: usize) -> u8 {
    (slot / TEAM_SIZE) as u8
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("schema violation at {location}: {message}")]
    SchemaViolation { location: Location, message: String },
    #[error("match contains no frames")]
    EmptyMatch,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ItemSlot {
    pub item_id: u8,
    pub cooldown: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HeroSnapshot {
    pub slot: u8,
    pub hero_id: u16,
    pub alive: bool,
    pub health: f64,
    pub max_health: f64,
    pub mana: f64,
    pub max_mana: f64,
    pub pos_x: f64,
    pub pos_y: f64,
    pub visible_to_enemy: bool,
    pub state_attrs: Vec<f64>,
    pub stat_attrs: Vec<f64>,
    pub items: Vec<ItemSlot>,
    pub abilities: Vec<[f64; ABILITY_ATTR_COUNT]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Tower {
    pub team: u8,
    pub x: f64,
    pub y: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TickFrame {
    pub tick: u64,
    pub game_time: f64,
    pub paused: bool,
    pub heroes: Vec<HeroSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub towers: Option<Vec<Tower>>,
}

impl TickFrame {
    /// Snapshots indexed by slot. Assumes the frame passed validation.
    pub fn by_slot(&self) -> [&HeroSnapshot; HERO_COUNT] {
        let mut out = [&self.heroes[0]; HERO_COUNT];
        for h in &self.heroes {
            out[h.slot as usize] = h;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DeathEvent {
    pub slot: u8,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub match_id: String,
    pub tick_interval: f64,
    pub roster_size: usize,
    pub frames: Vec<TickFrame>,
    pub deaths: Vec<DeathEvent>,
}

impl MatchRecord {
    /// Hero id per slot, read from the first frame.
    pub fn hero_ids(&self) -> [u16; HERO_COUNT] {
        let mut ids = [0u16; HERO_COUNT];
        if let Some(frame) = self.frames.first() {
            for h in &frame.heroes {
                if (h.slot as usize) < HERO_COUNT {
                    ids[h.slot as usize] = h.hero_id;
                }
            }
        }
        ids
    }

    /// Death times per slot in ascending order.
    pub fn deaths_by_slot(&self) -> [Vec<f64>; HERO_COUNT] {
        let mut out: [Vec<f64>; HERO_COUNT] = Default::default();
        for d in &self.deaths {
            if (d.slot as usize) < HERO_COUNT {
                out[d.slot as usize].push(d.time);
            }
        }
        for v in &mut out {
            v.sort_by(f64::total_cmp);
        }
        out
    }
}

/// Where in a match an invariant was broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Header,
    Line(usize),
    Frame(usize),
    Hero { frame: usize, slot: usize },
    Death(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Header => write!(f, "header"),
            Location::Line(l) => write!(f, "line {l}"),
            Location::Frame(i) => write!(f, "frame {i}"),
            Location::Hero { frame, slot } => write!(f, "frame {frame} slot {slot}"),
            Location::Death(i) => write!(f, "death {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    match_id: String,
    tick_interval: f64,
    roster_size: usize,
    hero_ids: Vec<u16>,
}

#[derive(Serialize, Deserialize)]
struct DeathsRecord {
    deaths: Vec<DeathEvent>,
}

fn schema(location: Location, message: impl Into<String>) -> MatchError {
    MatchError::SchemaViolation {
        location,
        message: message.into(),
    }
}

/// Parses a match from plain or gzip-compressed line-delimited text.
pub fn parse_match<R: Read>(source: R) -> Result<MatchRecord, MatchError> {
    let mut reader = BufReader::new(source);
    let is_gzip = {
        let head = reader.fill_buf()?;
        head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b
    };
    if is_gzip {
        parse_lines(BufReader::new(MultiGzDecoder::new(reader)))
    } else {
        parse_lines(reader)
    }
}

fn parse_lines<R: BufRead>(reader: R) -> Result<MatchRecord, MatchError> {
    let mut header: Option<Header> = None;
    let mut frames = Vec::new();
    let mut deaths: Option<Vec<DeathEvent>> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| MatchError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        if !value.is_object() {
            return Err(MatchError::MalformedRecord {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        }
        if deaths.is_some() {
            return Err(schema(
                Location::Line(line_no),
                "record after the deaths record",
            ));
        }
        if header.is_none() {
            let h: Header = serde_json::from_value(value)
                .map_err(|e| schema(Location::Header, e.to_string()))?;
            header = Some(h);
        } else if value.get("deaths").is_some() {
            let d: DeathsRecord = serde_json::from_value(value)
                .map_err(|e| schema(Location::Line(line_no), e.to_string()))?;
            deaths = Some(d.deaths);
        } else {
            let frame_index = frames.len();
            let frame: TickFrame = serde_json::from_value(value)
                .map_err(|e| schema(Location::Frame(frame_index), e.to_string()))?;
            frames.push(frame);
        }
    }

    let header = header.ok_or(MatchError::EmptyMatch)?;
    if frames.is_empty() {
        return Err(MatchError::EmptyMatch);
    }
    let deaths = deaths.ok_or_else(|| schema(Location::Header, "missing deaths record"))?;
    if header.hero_ids.len() != HERO_COUNT {
        return Err(schema(
            Location::Header,
            format!("expected {HERO_COUNT} hero ids, found {}", header.hero_ids.len()),
        ));
    }

    let record = MatchRecord {
        match_id: header.match_id,
        tick_interval: header.tick_interval,
        roster_size: header.roster_size,
        frames,
        deaths,
    };
    if let Some(v) = validate_match(&record).into_iter().next() {
        return Err(MatchError::SchemaViolation {
            location: v.location,
            message: v.message,
        });
    }
    for (fi, frame) in record.frames.iter().enumerate() {
        for h in &frame.heroes {
            if header.hero_ids[h.slot as usize] != h.hero_id {
                return Err(schema(
                    Location::Hero {
                        frame: fi,
                        slot: h.slot as usize,
                    },
                    "hero id differs from header",
                ));
            }
        }
    }
    Ok(record)
}

/// Writes `m` in the line-delimited format. Output is deterministic.
pub fn write_match<W: Write>(m: &MatchRecord, sink: W) -> io::Result<()> {
    let mut w = BufWriter::new(sink);
    let header = Header {
        match_id: m.match_id.clone(),
        tick_interval: m.tick_interval,
        roster_size: m.roster_size,
        hero_ids: m.hero_ids().to_vec(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for frame in &m.frames {
        serde_json::to_writer(&mut w, frame)?;
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(
        &mut w,
        &DeathsRecord {
            deaths: m.deaths.clone(),
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn write_match_bytes(m: &MatchRecord) -> Vec<u8> {
    let mut buf = Vec::new();
    write_match(m, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_match_file(path: impl AsRef<Path>) -> Result<MatchRecord, MatchError> {
    parse_match(File::open(path)?)
}

/// Writes a match file; paths ending in `.gz` are gzip-compressed.
pub fn write_match_file(path: impl AsRef<Path>, m: &MatchRecord) -> io::Result<()> {
    let path = path.as_ref();
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        write_match(m, &mut enc)?;
        enc.finish()?.sync_all()
    } else {
        write_match(m, file)
    }
}

/// Drops paused frames, keeping order. Deaths are untouched.
pub fn strip_pauses(m: &MatchRecord) -> Result<MatchRecord, MatchError> {
    let frames: Vec<TickFrame> = m.frames.iter().filter(|f| !f.paused).cloned().collect();
    if frames.is_empty() {
        return Err(MatchError::EmptyMatch);
    }
    Ok(MatchRecord {
        frames,
        ..m.clone()
    })
}

/// Lists every invariant violation in `m`. An empty list means the match is usable.
pub fn validate_match(m: &MatchRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: Location, message: String| out.push(Violation { location, message });

    if m.frames.is_empty() {
        push(Location::Header, "match has no frames".into());
    }
    if !(m.tick_interval.is_finite() && m.tick_interval > 0.0) {
        push(Location::Header, format!("invalid tick_interval {}", m.tick_interval));
    }
    if m.roster_size == 0 {
        push(Location::Header, "roster_size must be positive".into());
    }

    let reference_ids = m.hero_ids();
    let mut prev_tick: Option<u64> = None;
    let mut prev_time: Option<f64> = None;
    let mut prev_unpaused_time: Option<f64> = None;

    for (fi, frame) in m.frames.iter().enumerate() {
        if !frame.game_time.is_finite() {
            push(Location::Frame(fi), "game_time is not finite".into());
        }
        if let Some(pt) = prev_tick {
            if frame.tick <= pt {
                push(Location::Frame(fi), format!("tick {} not after {}", frame.tick, pt));
            }
        }
        if let Some(pt) = prev_time {
            if frame.game_time < pt {
                push(Location::Frame(fi), "game_time decreases".into());
            }
        }
        if !frame.paused {
            if let Some(pt) = prev_unpaused_time {
                if frame.game_time <= pt {
                    push(
                        Location::Frame(fi),
                        "game_time not strictly increasing across unpaused frames".into(),
                    );
                }
            }
            prev_unpaused_time = Some(frame.game_time);
        }
        prev_tick = Some(frame.tick);
        prev_time = Some(frame.game_time);

        if frame.heroes.len() != HERO_COUNT {
            push(
                Location::Frame(fi),
                format!("expected {HERO_COUNT} heroes, found {}", frame.heroes.len()),
            );
            continue;
        }
        let mut seen = [false; HERO_COUNT];
        for h in &frame.heroes {
            let slot = h.slot as usize;
            if slot >= HERO_COUNT {
                push(Location::Frame(fi), format!("slot {slot} out of range"));
                continue;
            }
            if seen[slot] {
                push(Location::Frame(fi), format!("slot {slot} appears twice"));
                continue;
            }
            seen[slot] = true;
            let loc = Location::Hero { frame: fi, slot };
            if h.hero_id as usize >= m.roster_size {
                push(loc, format!("hero_id {} outside roster of {}", h.hero_id, m.roster_size));
            }
            if h.hero_id != reference_ids[slot] {
                push(loc, "hero_id changes during the match".into());
            }
            check_snapshot(h, loc, &mut push);
        }

        if let Some(towers) = &frame.towers {
            for t in towers {
                if t.team > 1 {
                    push(Location::Frame(fi), format!("tower team {} invalid", t.team));
                }
                if !(t.x.is_finite() && t.y.is_finite()) {
                    push(Location::Frame(fi), "tower position not finite".into());
                }
            }
        }
    }

    let (first, last) = match (m.frames.first(), m.frames.last()) {
        (Some(f), Some(l)) => (f.game_time, l.game_time),
        _ => (f64::NAN, f64::NAN),
    };
    let mut last_death = [f64::NEG_INFINITY; HERO_COUNT];
    for (di, d) in m.deaths.iter().enumerate() {
        let slot = d.slot as usize;
        if slot >= HERO_COUNT {
            push(Location::Death(di), format!("slot {slot} out of range"));
            continue;
        }
        if !d.time.is_finite() || d.time < first || d.time > last {
            push(
                Location::Death(di),
                format!("time {} outside [{first}, {last}]", d.time),
            );
        }
        if d.time <= last_death[slot] {
            push(
                Location::Death(di),
                format!("deaths of slot {slot} not strictly increasing"),
            );
        }
        last_death[slot] = d.time;
    }
    out
}

fn check_snapshot(h: &HeroSnapshot, loc: Location, push: &mut impl FnMut(Location, String)) {
    let scalars = [
        h.health,
        h.max_health,
        h.mana,
        h.max_mana,
        h.pos_x,
        h.pos_y,
    ];
    if scalars.iter().any(|v| !v.is_finite()) {
        push(loc, "non-finite scalar attribute".into());
    }
    if !(0.0 <= h.health && h.health <= h.max_health) {
        push(loc, format!("health {} outside [0, {}]", h.health, h.max_health));
    }
    if !(0.0 <= h.mana && h.mana <= h.max_mana) {
        push(loc, format!("mana {} outside [0, {}]", h.mana, h.max_mana));
    }
    if h.state_attrs.len() != STATE_ATTR_COUNT {
        push(
            loc,
            format!("expected {STATE_ATTR_COUNT} state attributes, found {}", h.state_attrs.len()),
        );
    }
    if h.stat_attrs.len() != STAT_ATTR_COUNT {
        push(
            loc,
            format!("expected {STAT_ATTR_COUNT} stat attributes, found {}", h.stat_attrs.len()),
        );
    }
    if h.state_attrs.iter().chain(&h.stat_attrs).any(|v| !v.is_finite()) {
        push(loc, "non-finite state or stat attribute".into());
    }
    let mut items_seen = [false; TRACKED_ITEMS.len()];
    for item in &h.items {
        let id = item.item_id as usize;
        if id >= TRACKED_ITEMS.len() {
            push(loc, format!("untracked item id {id}"));
            continue;
        }
        if items_seen[id] {
            push(loc, format!("item {id} listed twice"));
        }
        items_seen[id] = true;
        if !(item.cooldown.is_finite() && item.cooldown >= 0.0) {
            push(loc, format!("item {id} cooldown {} invalid", item.cooldown));
        }
    }
    if h.abilities.len() > MAX_ABILITIES {
        push(loc, format!("{} abilities exceed {MAX_ABILITIES}", h.abilities.len()));
    }
    if h.abilities.iter().flatten().any(|v| !v.is_finite()) {
        push(loc, "non-finite ability attribute".into());
    }
}

/// Groups violations per location for compact reporting.
pub fn summarize_violations(violations: &[Violation]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for v in violations {
        *out.entry(v.message.clone()).or_insert(0) += 1;
    }
    out
}
