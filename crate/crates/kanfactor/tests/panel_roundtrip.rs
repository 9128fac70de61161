use std::collections::BTreeSet;
use std::path::Path;

use kanfactor::panel::{read_panel, write_panel};
use kanfactor_core::data::{CharacteristicSpec, Frequency, Observation, RawPanel, YearMonth};
use proptest::prelude::*;

fn cell() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        1 => Just(None),
        4 => prop::num::f64::NORMAL.prop_map(Some),
        2 => (-1.0f64..1.0).prop_map(Some),
    ]
}

fn panel() -> impl Strategy<Value = RawPanel> {
    let freq = prop_oneof![Just(Frequency::Monthly), Just(Frequency::Quarterly), Just(Frequency::Annual)];
    (
        prop::collection::vec(freq, 1..4),
        prop::collection::btree_set("[A-Z][A-Z0-9]{0,5}", 1..5),
        1usize..5,
        1990i32..2030,
        1u32..=12,
    )
        .prop_flat_map(|(freqs, ids, months, year, month)| {
            let p = freqs.len();
            let rows = ids.len() * months;
            (
                Just(freqs),
                Just(ids),
                Just(months),
                Just(YearMonth::new(year, month).unwrap()),
                prop::collection::vec((cell(), prop::collection::vec(cell(), p)), rows),
            )
        })
        .prop_map(|(freqs, ids, months, start, cells): (Vec<Frequency>, BTreeSet<String>, usize, YearMonth, Vec<_>)| {
            let specs = freqs
                .iter()
                .enumerate()
                .map(|(i, &frequency)| CharacteristicSpec {
                    name: format!("c{i}"),
                    frequency,
                })
                .collect();
            let mut cells = cells.into_iter();
            let mut obs = Vec::new();
            for m in 0..months {
                for id in &ids {
                    let (ret_excess, characteristics) = cells.next().unwrap();
                    obs.push(Observation {
                        date: start.add_months(m as i64),
                        asset_id: id.clone(),
                        ret_excess,
                        characteristics,
                    });
                }
            }
            RawPanel::new(specs, obs).unwrap()
        })
}

proptest! {
    #[test]
    fn panel_csv_round_trips(p in panel()) {
        let mut bytes = Vec::new();
        write_panel(&mut bytes, &p).unwrap();
        let back = read_panel(bytes.as_slice(), p.characteristics().to_vec(), Path::new("mem.csv")).unwrap();
        prop_assert_eq!(&back, &p);
        let mut again = Vec::new();
        write_panel(&mut again, &back).unwrap();
        prop_assert_eq!(again, bytes);
    }
}
