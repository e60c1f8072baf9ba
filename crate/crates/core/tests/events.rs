use actorlens_core::events::{self, EventKind, KindSet, MinuteEvents};

const LISTED: [&str; 9] = [
    "turret_destruction",
    "dragon_killing",
    "hero_killing",
    "death",
    "assist",
    "poke",
    "monster_killing",
    "minion_killing",
    "inaction",
];

fn minute(kinds: KindSet) -> MinuteEvents {
    MinuteEvents {
        minute_index: 0,
        kinds_present: kinds,
        poke_damage: 0.0,
        monster_economy: 0.0,
        minion_economy: 0.0,
        contributed_only: KindSet::EMPTY,
    }
}

#[test]
fn priority_event_matches_rank_scan_on_every_subset() {
    for bits in 1u16..512 {
        let mut set = KindSet::EMPTY;
        let mut members = Vec::new();
        for (i, name) in LISTED.iter().enumerate() {
            if bits & (1 << i) != 0 {
                let kind: EventKind = name.parse().unwrap();
                set.insert(kind);
                members.push(*name);
            }
        }
        let expected = LISTED.iter().find(|n| members.contains(n)).unwrap();
        assert_eq!(events::priority_event(&minute(set)).name(), *expected, "{members:?}");
    }
}

#[test]
fn empty_minute_is_inaction() {
    assert_eq!(events::priority_event(&minute(KindSet::EMPTY)), EventKind::Inaction);
}
