//! Toponym index for geocoding and prefix autocomplete.
//!
//! Input is the tab-separated extract `geonameid, name, asciiname, latitude,
//! longitude, country_code, population` without a header; extra trailing
//! columns are ignored. Names are matched after case folding and stripping
//! diacritics, so "sao" finds "São Paulo".

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Toponym {
    pub geoname_id: u64,
    pub name: String,
    pub ascii_name: String,
    pub location: Point,
    pub country: String,
    pub population: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub skipped: Vec<SkippedRow>,
    /// Ids seen more than once; the last row won.
    pub duplicates: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    pub name: String,
    pub location: Point,
    pub country: String,
    pub population: u64,
}

/// Lowercase, decompose and drop combining marks.
pub fn fold(s: &str) -> String {
    s.trim().nfd().filter(|c| !is_combining_mark(*c)).flat_map(char::to_lowercase).collect()
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    toponyms: HashMap<u64, Toponym>,
    index: BTreeMap<String, BTreeSet<u64>>,
}

fn parse_row(fields: &[&str]) -> Result<Toponym, String> {
    if fields.len() < 7 {
        return Err(format!("expected 7 columns, found {}", fields.len()));
    }
    let geoname_id = fields[0].trim().parse::<u64>().map_err(|_| format!("bad geonameid {:?}", fields[0]))?;
    let name = fields[1].trim();
    if name.is_empty() {
        return Err("empty name".into());
    }
    let ascii_name = match fields[2].trim() {
        "" => name,
        a => a,
    };
    let lat = fields[3].trim().parse::<f64>().map_err(|_| format!("bad latitude {:?}", fields[3]))?;
    let lon = fields[4].trim().parse::<f64>().map_err(|_| format!("bad longitude {:?}", fields[4]))?;
    let location = Point::new(lon, lat).map_err(|e| e.to_string())?;
    let population = match fields[6].trim() {
        "" => 0,
        p => p.parse::<u64>().map_err(|_| format!("bad population {p:?}"))?,
    };
    Ok(Toponym {
        geoname_id,
        name: name.to_string(),
        ascii_name: ascii_name.to_string(),
        location,
        country: fields[5].trim().to_string(),
        population,
    })
}

impl Gazetteer {
    pub fn load(tsv: &[u8]) -> (Self, LoadReport) {
        let text = String::from_utf8_lossy(tsv);
        let mut g = Gazetteer::default();
        let mut report = LoadReport::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match parse_row(&fields) {
                Ok(t) => {
                    if g.toponyms.contains_key(&t.geoname_id) {
                        tracing::warn!(id = t.geoname_id, line = i + 1, "duplicate geonameid, keeping the later row");
                        report.duplicates.push(t.geoname_id);
                    }
                    g.toponyms.insert(t.geoname_id, t);
                }
                Err(reason) => {
                    tracing::warn!(line = i + 1, %reason, "skipping gazetteer row");
                    report.skipped.push(SkippedRow { line: i + 1, reason });
                }
            }
        }
        for t in g.toponyms.values() {
            for key in [fold(&t.name), fold(&t.ascii_name)] {
                g.index.entry(key).or_default().insert(t.geoname_id);
            }
        }
        report.accepted = g.toponyms.len();
        (g, report)
    }

    pub fn len(&self) -> usize {
        self.toponyms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.toponyms.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&Toponym> {
        self.toponyms.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Toponym> {
        self.toponyms.values()
    }

    fn ranked<'a>(&'a self, ids: impl Iterator<Item = u64>) -> Vec<&'a Toponym> {
        let mut out: Vec<&Toponym> = ids.filter_map(|id| self.toponyms.get(&id)).collect();
        out.sort_by(|a, b| {
            b.population
                .cmp(&a.population)
                .then_with(|| a.name.cmp(&b.name))
                .then_with(|| a.geoname_id.cmp(&b.geoname_id))
        });
        out.dedup_by_key(|t| t.geoname_id);
        out
    }

    /// Distinct names whose folded form starts with the folded prefix,
    /// most populous first.
    pub fn autocomplete(&self, prefix: &str, limit: usize) -> Vec<String> {
        let key = fold(prefix);
        if key.is_empty() || limit == 0 {
            return Vec::new();
        }
        let ids = self
            .index
            .range(key.clone()..)
            .take_while(|(k, _)| k.starts_with(&key))
            .flat_map(|(_, ids)| ids.iter().copied());
        let mut seen = BTreeSet::new();
        self.ranked(ids)
            .into_iter()
            .filter(|t| seen.insert(t.name.clone()))
            .map(|t| t.name.clone())
            .take(limit)
            .collect()
    }

    /// Every toponym whose folded name or ascii name equals the folded
    /// query, most populous first.
    pub fn lookup(&self, name: &str) -> Vec<Match> {
        let Some(ids) = self.index.get(&fold(name)) else {
            return Vec::new();
        };
        self.ranked(ids.iter().copied())
            .into_iter()
            .map(|t| Match {
                name: t.name.clone(),
                location: t.location,
                country: t.country.clone(),
                population: t.population,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIXTURE: &str = "2267057\tLisboa\tLisboa\t38.71667\t-9.13333\tPT\t517802\n\
2267095\tLeiria\tLeiria\t39.74362\t-8.80705\tPT\t45112\n\
2735943\tPorto\tPorto\t41.14961\t-8.61099\tPT\t249633\n\
3448439\tSão Paulo\tSao Paulo\t-23.5475\t-46.63611\tBR\t10021295\n";

    fn fixture() -> Gazetteer {
        Gazetteer::load(FIXTURE.as_bytes()).0
    }

    #[test]
    fn loads_fixture() {
        let (g, r) = Gazetteer::load(FIXTURE.as_bytes());
        assert_eq!((g.len(), r.accepted, r.skipped.len()), (4, 4, 0));
    }

    #[test]
    fn malformed_and_empty_input() {
        let bad = format!("{FIXTURE}1\tX\tX\tnorth\t0\tPT\t1\n2\tshort\n");
        let (g, r) = Gazetteer::load(bad.as_bytes());
        assert_eq!(g.len(), 4);
        assert_eq!(r.skipped.len(), 2);
        assert_eq!(r.skipped[0].line, 5);
        assert!(r.skipped[0].reason.contains("latitude"));
        let (g, r) = Gazetteer::load(b"");
        assert!(g.is_empty());
        assert_eq!(r, LoadReport::default());
    }

    #[test]
    fn duplicate_id_last_wins() {
        let dup = format!("{FIXTURE}2735943\tOporto\tOporto\t41.15\t-8.61\tPT\t1\n");
        let (g, r) = Gazetteer::load(dup.as_bytes());
        assert_eq!(r.duplicates, vec![2735943]);
        assert_eq!(g.get(2735943).unwrap().name, "Oporto");
        assert!(g.lookup("Porto").is_empty());
    }

    #[test]
    fn autocomplete_examples() {
        let g = fixture();
        assert_eq!(g.autocomplete("Lis", 10), vec!["Lisboa"]);
        assert_eq!(g.autocomplete("lIs", 10), vec!["Lisboa"]);
        assert!(g.autocomplete("Zz", 10).is_empty());
        assert_eq!(g.autocomplete("L", 10), vec!["Lisboa", "Leiria"]);
        assert_eq!(g.autocomplete("L", 1), vec!["Lisboa"]);
        assert_eq!(g.autocomplete("sao", 5), vec!["São Paulo"]);
        assert_eq!(g.autocomplete("SÃO P", 5), vec!["São Paulo"]);
    }

    #[test]
    fn lookup_returns_homonyms() {
        let tsv = "1\tSantiago\tSantiago\t-33.45\t-70.66\tCL\t4837295\n\
2\tSantiago\tSantiago\t42.88\t-8.54\tES\t95092\n\
3\tSantarém\tSantarem\t39.23\t-8.68\tPT\t29929\n";
        let (g, _) = Gazetteer::load(tsv.as_bytes());
        let hits = g.lookup("santiago");
        assert_eq!(hits.len(), 2);
        assert_eq!((hits[0].location.lat, hits[1].location.lat), (-33.45, 42.88));
        assert_eq!(g.lookup("Santarem")[0].name, "Santarém");
        assert!(g.lookup("Nowhere").is_empty());
    }

    fn arb_name() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "ã", "É", "o", "ç", " ", "L", "s"]), 1..8)
            .prop_map(|v| v.concat())
            .prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    proptest! {
        #[test]
        fn index_properties(names in prop::collection::vec(arb_name(), 1..20), prefix in arb_name()) {
            let tsv: String = names
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{i}\t{n}\t\t{}\t{}\tPT\t{}\n", i as f64 / 10.0, -(i as f64) / 10.0, i * 7 % 5))
                .collect();
            let (g, r) = Gazetteer::load(tsv.as_bytes());
            prop_assert_eq!(g.len(), r.accepted);
            prop_assert_eq!(g.len(), names.len());
            let fp = fold(&prefix);
            for hit in g.autocomplete(&prefix, usize::MAX) {
                prop_assert!(fold(&hit).starts_with(&fp));
            }
            for t in g.iter() {
                let found = g.lookup(&t.name);
                prop_assert!(found.iter().any(|m| m.location == t.location));
                let completions = g.autocomplete(&t.name, usize::MAX);
                for m in found {
                    prop_assert!(completions.contains(&m.name));
                }
            }
        }
    }
}
