use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CellResult, ExperimentError};
use crate::lang::Language;
use crate::mutate::MutationType;

/// Cells of one setting keyed by (source, target), plus the per-target
/// baselines they are compared against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    #[serde(with = "pair_map")]
    pub cells: BTreeMap<(Language, Language), CellResult>,
    pub baseline: BTreeMap<Language, CellResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub pass_rate: f64,
    pub baseline: f64,
    /// Percentage points over the baseline.
    pub delta_pp: f64,
    /// Percent change relative to the baseline; `None` when the baseline is 0.
    pub relative_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub pass_rate: f64,
    pub delta_pp: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    #[serde(with = "pair_map")]
    pub cells: BTreeMap<(Language, Language), DeltaCell>,
    /// Keyed by source language.
    pub row_means: BTreeMap<Language, Means>,
    /// Keyed by target language.
    pub col_means: BTreeMap<Language, Means>,
    pub grand_mean: Means,
}

/// Maps keyed by a language pair serialize as a list of
/// `{source, target, value}` entries, since JSON keys must be strings.
mod pair_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::lang::Language;

    #[derive(Serialize, Deserialize)]
    struct Entry<V> {
        source: Language,
        target: Language,
        value: V,
    }

    pub fn serialize<V: Serialize, S: Serializer>(
        map: &BTreeMap<(Language, Language), V>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry<&V>> = map
            .iter()
            .map(|(&(source, target), v)| Entry {
                source,
                target,
                value: v,
            })
            .collect();
        entries.serialize(ser)
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<(Language, Language), V>, D::Error> {
        let entries = Vec::<Entry<V>>::deserialize(de)?;
        Ok(entries.into_iter().map(|e| ((e.source, e.target), e.value)).collect())
    }
}

pub fn relative_delta(value: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (value - baseline) / baseline)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn means(cells: &[&DeltaCell]) -> Means {
    Means {
        pass_rate: mean(&cells.iter().map(|c| c.pass_rate).collect::<Vec<_>>()),
        delta_pp: mean(&cells.iter().map(|c| c.delta_pp).collect::<Vec<_>>()),
    }
}

pub fn delta_table(results: &ResultsTable) -> Result<DeltaTable, ExperimentError> {
    let mut out = DeltaTable::default();
    for (&(src, tgt), cell) in &results.cells {
        let base = results
            .baseline
            .get(&tgt)
            .ok_or(ExperimentError::MissingBaseline(tgt))?
            .pass_rate;
        out.cells.insert(
            (src, tgt),
            DeltaCell {
                pass_rate: cell.pass_rate,
                baseline: base,
                delta_pp: cell.pass_rate - base,
                relative_pct: relative_delta(cell.pass_rate, base),
            },
        );
    }
    let sources: BTreeSet<Language> = out.cells.keys().map(|k| k.0).collect();
    let targets: BTreeSet<Language> = out.cells.keys().map(|k| k.1).collect();
    for s in sources {
        let row: Vec<&DeltaCell> = out.cells.iter().filter(|(k, _)| k.0 == s).map(|(_, c)| c).collect();
        out.row_means.insert(s, means(&row));
    }
    for t in targets {
        let col: Vec<&DeltaCell> = out.cells.iter().filter(|(k, _)| k.1 == t).map(|(_, c)| c).collect();
        out.col_means.insert(t, means(&col));
    }
    out.grand_mean = means(&out.cells.values().collect::<Vec<_>>());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation (divides by N - 1); 0 for a single value.
    pub std: f64,
    /// Population standard deviation (divides by N).
    pub std_population: f64,
}

pub fn aggregate_stats(values: &[f64]) -> Result<Stats, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::InvalidConfig("statistics need at least one value".into()));
    }
    let n = values.len() as f64;
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok(Stats {
        mean: m,
        std: if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 },
        std_population: (ss / n).sqrt(),
    })
}

pub fn aggregate_cells(cells: &[&CellResult]) -> Result<Stats, ExperimentError> {
    aggregate_stats(&cells.iter().map(|c| c.pass_rate).collect::<Vec<_>>())
}

/// Pass/fail under (baseline, clean documents, perturbed documents).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Category {
    pub baseline: bool,
    pub clean: bool,
    pub perturbed: bool,
}

impl Category {
    pub fn all() -> impl Iterator<Item = Category> {
        (0..8u8).map(|b| Category {
            baseline: b & 4 != 0,
            clean: b & 2 != 0,
            perturbed: b & 1 != 0,
        })
    }

    /// Fails without retrieval and with clean documents, passes once the
    /// documents are perturbed.
    pub fn is_positive_noise(self) -> bool {
        !self.baseline && !self.clean && self.perturbed
    }

    pub fn label(self) -> String {
        let pf = |b: bool| if b { "pass" } else { "fail" };
        format!("{}/{}/{}", pf(self.baseline), pf(self.clean), pf(self.perturbed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCategories {
    pub mutation: Option<MutationType>,
    pub source: Option<Language>,
    pub target: Language,
    /// Every category, including empty ones, keyed by label.
    pub counts: BTreeMap<String, usize>,
    pub positive_noise: usize,
    /// Instance ids in the positive-noise category.
    pub positive_noise_tasks: Vec<String>,
}

pub fn categorize_perturbation_effects(
    attack: &CellResult,
    clean: &CellResult,
    baseline: &CellResult,
) -> Result<CaseCategories, ExperimentError> {
    let verdicts = |c: &CellResult| -> BTreeMap<String, bool> {
        c.per_task
            .iter()
            .map(|t| (t.instance_id.clone(), t.verdict.is_pass()))
            .collect()
    };
    let (a, c, b) = (verdicts(attack), verdicts(clean), verdicts(baseline));
    let keys = |m: &BTreeMap<String, bool>| m.keys().cloned().collect::<BTreeSet<_>>();
    if keys(&a) != keys(&c) || keys(&a) != keys(&b) {
        return Err(ExperimentError::TaskSetMismatch);
    }
    if attack.source() != clean.source() || attack.target() != clean.target() || baseline.target() != attack.target() {
        return Err(ExperimentError::TaskSetMismatch);
    }
    let mut counts: BTreeMap<String, usize> = Category::all().map(|c| (c.label(), 0)).collect();
    let mut positive_noise_tasks = Vec::new();
    for (id, &perturbed) in &a {
        let cat = Category {
            baseline: b[id],
            clean: c[id],
            perturbed,
        };
        *counts.get_mut(&cat.label()).expect("all categories present") += 1;
        if cat.is_positive_noise() {
            positive_noise_tasks.push(id.clone());
        }
    }
    Ok(CaseCategories {
        mutation: attack.config.mutation,
        source: attack.source(),
        target: attack.target(),
        counts,
        positive_noise: positive_noise_tasks.len(),
        positive_noise_tasks,
    })
}
