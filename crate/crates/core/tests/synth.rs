use actorlens_core::detect::{self, DetectorConfig};
use actorlens_core::events;
use actorlens_core::synth::{self, Archetype, BehaviorScript, TrueClass};
use actorlens_core::telemetry::{self, KeyEventKind};

fn roster(planted: usize, archetype: Archetype) -> Vec<BehaviorScript> {
    (0..10)
        .map(|i| {
            let a = if i == planted {
                archetype
            } else if i % 5 == 1 {
                Archetype::NormalJungler
            } else {
                Archetype::NormalLaner
            };
            BehaviorScript::new(a, i as u64)
        })
        .collect()
}

#[test]
fn generated_match_parses_and_validates() {
    for seed in 0..20 {
        let (m, _) = synth::generate_match(&roster(0, Archetype::NormalLaner), 1200 + 10 * (seed as u32 % 3), seed).unwrap();
        let text = telemetry::serialize_match(&m);
        let back = telemetry::parse_match(&text).unwrap_or_else(|e| panic!("seed {seed}: {e:?}"));
        assert_eq!(back, m);
    }
}

#[test]
fn normal_players_are_never_flagged() {
    let cfg = DetectorConfig::default();
    for seed in 0..30 {
        let (m, _) = synth::generate_match(&roster(0, Archetype::NormalLaner), 1320, seed).unwrap();
        for row in detect::detect_match(&m, &cfg) {
            assert!(!row.low_level, "seed {seed}: {row:?}");
        }
    }
}

#[test]
fn afk_plant_idles_exactly_its_span() {
    let cfg = DetectorConfig::default();
    for (seed, span) in [(1u64, 120u32), (2, 150), (3, 400)] {
        let (m, truth) = synth::generate_match(&roster(3, Archetype::Afk { idle_span_s: span }), 1200, seed).unwrap();
        let p = &m.players[3];
        assert_eq!(p.summary.idle_time_s, span as f64);
        assert_eq!(truth.class_of(&m.match_id, &p.player_id), Some(TrueClass::LowLevelAfk));
        assert!(detect::detect_match(&m, &cfg)[3].low_level);
    }
}

#[test]
fn feeder_plant_yields_exactly_k_suspected_deaths() {
    let cfg = DetectorConfig::default();
    for seed in 0..20u64 {
        let k = 3 + (seed % 3) as u32;
        let (m, _) = synth::generate_match(&roster(7, Archetype::Feeder { suspected_deaths: k }), 1200, seed).unwrap();
        let pid = &m.players[7].player_id;
        let deaths: Vec<_> = m.deaths_of(pid).collect();
        assert_eq!(deaths.len(), k as usize, "seed {seed}");
        for d in &deaths {
            assert!(detect::classify_death(d, &cfg).suspected, "seed {seed}: {d:?}");
        }
    }
}

#[test]
fn dragon_no_show_stays_away_from_dragon_fights() {
    for seed in 0..20u64 {
        let (m, _) = synth::generate_match(&roster(2, Archetype::DragonNoShow), 1200, seed).unwrap();
        let pid = m.players[2].player_id.clone();
        let combats = events::detect_team_combats(&m);
        let dragons: Vec<f64> = m
            .key_events
            .iter()
            .filter(|e| e.kind == KeyEventKind::DragonKilled)
            .map(|e| e.t)
            .collect();
        let hit = combats.iter().any(|c| {
            dragons.iter().any(|t| *t >= c.start_s as f64 && *t < c.end_s as f64) && {
                let centroid_ok = (c.start_s / 10..c.end_s / 10).all(|s| {
                    let mine = m.position_at(&pid, s as usize).unwrap();
                    mine.distance(telemetry::Point::new(0.70, 0.30)) >= 0.3
                });
                centroid_ok && !c.participants.contains(&pid)
            }
        });
        assert!(hit, "seed {seed}: combats {combats:?} dragons {dragons:?}");
    }
}
