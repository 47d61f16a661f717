//! Seeded synthetic complaint data for demos, fixtures and tests.
//!
//! Each component is tied to its own set of failure verbs and situations, so a
//! masked LM trained on the output can learn which component a context implies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::ComplaintRecord;

struct Component {
    compdesc: &'static str,
    noun: &'static str,
    verbs: &'static [&'static str],
    situations: &'static [&'static str],
}

const COMPONENTS: &[Component] = &[
    Component {
        compdesc: "ENGINE AND ENGINE COOLING:ENGINE",
        noun: "engine",
        verbs: &["stalled", "overheated", "hesitated", "died"],
        situations: &["on the highway", "while accelerating", "at idle"],
    },
    Component {
        compdesc: "SERVICE BRAKES, HYDRAULIC",
        noun: "brakes",
        verbs: &["failed", "squealed", "locked up", "faded"],
        situations: &["when stopping at a light", "while braking downhill", "in the rain"],
    },
    Component {
        compdesc: "POWER TRAIN:AUTOMATIC TRANSMISSION",
        noun: "transmission",
        verbs: &["slipped", "jerked", "would not shift", "hesitated"],
        situations: &["between gears", "from park to drive", "while accelerating"],
    },
    Component {
        compdesc: "AIR BAGS:FRONTAL",
        noun: "airbag",
        verbs: &["deployed", "did not deploy", "warning light came on"],
        situations: &["during a minor crash", "without any impact", "after the collision"],
    },
    Component {
        compdesc: "STEERING:WHEEL AND COLUMN",
        noun: "steering",
        verbs: &["locked", "became stiff", "pulled to the left"],
        situations: &["while turning", "at low speed", "when parking"],
    },
    Component {
        compdesc: "SEATS:FRONT ASSEMBLY:POWER ADJUST",
        noun: "seat",
        verbs: &["collapsed", "would not adjust", "moved backwards"],
        situations: &["while driving", "during the recall repair", "when the door opened"],
    },
    Component {
        compdesc: "SERVICE BRAKES, HYDRAULIC:ANTILOCK",
        noun: "antilock",
        verbs: &["light stayed on", "system activated", "module failed"],
        situations: &["on dry pavement", "at low speed", "when stopping"],
    },
    Component {
        compdesc: "ELECTRICAL SYSTEM:BATTERY",
        noun: "battery",
        verbs: &["drained", "caught fire", "would not charge"],
        situations: &["overnight", "in the garage", "after a short trip"],
    },
];

const OPENERS: &[&str] = &["the", "my", "the vehicle's"];
const CLOSERS: &[&str] = &[
    "the dealer could not find the problem",
    "the manufacturer was notified",
    "the vehicle was towed to the dealer",
    "no warning was given",
];

fn sentence(rng: &mut ChaCha8Rng, c: &Component) -> String {
    format!(
        "{} {} {} {}.",
        OPENERS.choose(rng).expect("openers"),
        c.noun,
        c.verbs.choose(rng).expect("verbs"),
        c.situations.choose(rng).expect("situations"),
    )
}

fn narrative(rng: &mut ChaCha8Rng, c: &Component) -> String {
    let mut text = sentence(rng, c);
    if rng.gen_bool(0.3) {
        text.push_str(" gear shift cable failure in auto transmission.");
    }
    if rng.gen_bool(0.8) {
        text.push_str(&format!(" the vehicle had {} miles.", rng.gen_range(1..150) * 1000));
    }
    if rng.gen_bool(0.5) {
        text.push(' ');
        text.push_str(CLOSERS.choose(rng).expect("closers"));
        text.push('.');
    }
    text
}

/// `n` lower-case complaint narratives.
pub fn complaint_narratives(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let c = COMPONENTS.choose(&mut rng).expect("components");
            narrative(&mut rng, c)
        })
        .collect()
}

/// `n` raw (upper-case) records with ids `1..=n`. Roughly one in six is filed
/// through a non-owner channel and a few narratives repeat verbatim.
pub fn complaint_records(n: usize, seed: u64) -> Vec<ComplaintRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<ComplaintRecord> = Vec::with_capacity(n);
    for i in 0..n {
        let c = COMPONENTS.choose(&mut rng).expect("components");
        let channel = match rng.gen_range(0..12) {
            0 => "INS",
            1 => "CAG",
            2..=6 => "EVOQ",
            _ => "IVOQ",
        };
        let narrative = if i > 0 && rng.gen_bool(0.02) {
            out[rng.gen_range(0..i)].narrative.clone()
        } else {
            narrative(&mut rng, c).to_uppercase()
        };
        out.push(ComplaintRecord {
            record_id: (i + 1).to_string(),
            narrative,
            component_description: c.compdesc.into(),
            source_channel: channel.into(),
            received_date: chrono::NaiveDate::from_ymd_opt(2019, 1 + (i % 12) as u32, 1 + (i % 28) as u32),
        });
    }
    out
}

/// Renders records in the tab-separated ODI column layout the default
/// schema expects (id col 0, component col 11, date col 15, narrative col 19,
/// channel col 20), padded to 49 columns.
pub fn odi_flat_file(records: &[ComplaintRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let mut cols = vec![String::new(); 49];
        cols[0] = r.record_id.clone();
        cols[1] = format!("{:06}", r.record_id.len() * 1000);
        cols[2] = "ACME MOTOR CO.".into();
        cols[11] = r.component_description.clone();
        cols[15] = r
            .received_date
            .map(|d| d.format("%Y%m%d").to_string())
            .unwrap_or_default();
        cols[19] = r.narrative.clone();
        cols[20] = r.source_channel.clone();
        out.push_str(&cols.join("\t"));
        out.push('\n');
    }
    out
}
