//! Loaders for the UCI Adult and Cleveland Heart Disease tables.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scorer::{read_table, CategoricalColumn, NumericColumn, Table, TableSpec};
use crate::error::{Error, Result};

const ADULT_COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

const ADULT_NUMERIC: [&str; 6] = [
    "age",
    "fnlwgt",
    "education-num",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
];

/// Reads one headerless Adult file (`adult.data` or `adult.test`), keeping
/// White and Black respondents. The group is race; `education` is dropped
/// because `education-num` encodes the same thing.
pub fn read_adult(path: impl AsRef<Path>, id_prefix: &str) -> Result<Table> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let col = |name: &str| ADULT_COLUMNS.iter().position(|c| *c == name).unwrap();
    let categorical: Vec<&str> = ADULT_COLUMNS
        .iter()
        .copied()
        .filter(|c| !ADULT_NUMERIC.contains(c) && !["education", "race", "income"].contains(c))
        .collect();
    let mut table = Table {
        numeric: ADULT_NUMERIC
            .iter()
            .map(|n| NumericColumn { name: n.to_string(), values: Vec::new() })
            .collect(),
        categorical: categorical
            .iter()
            .map(|n| CategoricalColumn { name: n.to_string(), values: Vec::new() })
            .collect(),
        ..Table::default()
    };
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        // Blank lines and the `|1x3 Cross validator` banner of adult.test.
        if rec.len() != ADULT_COLUMNS.len() {
            continue;
        }
        let race = &rec[col("race")];
        if race != "White" && race != "Black" {
            continue;
        }
        table.ids.push(format!("{id_prefix}{}", row + 1));
        table.groups.push(race.to_string());
        table.target.push(if rec[col("income")].starts_with(">50K") { 1.0 } else { 0.0 });
        for c in &mut table.numeric {
            let raw = &rec[col(&c.name)];
            c.values.push(raw.parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: c.name.clone(),
                value: raw.to_string(),
            })?);
        }
        for c in &mut table.categorical {
            c.values.push(rec[col(&c.name)].to_string());
        }
    }
    if table.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(table)
}

/// The official Adult train/test split.
pub fn load_adult(train: impl AsRef<Path>, test: impl AsRef<Path>) -> Result<(Table, Table)> {
    Ok((read_adult(train, "train-")?, read_adult(test, "test-")?))
}

/// Cleveland Heart Disease with UCI column names and a 0/1 `target`. The
/// group is sex (`male`/`female`); coded categoricals are one-hot encoded.
/// Rows are split in half at random under `seed`.
pub fn load_heart(path: impl AsRef<Path>, seed: u64) -> Result<(Table, Table)> {
    let spec = TableSpec {
        target: "target".into(),
        group: "sex".into(),
        id: None,
        categorical: ["cp", "restecg", "slope", "ca", "thal"].map(String::from).to_vec(),
        exclude: Vec::new(),
        positive: None,
    };
    let mut table = read_table(path, &spec)?;
    for g in &mut table.groups {
        *g = match g.as_str() {
            "1" | "1.0" => "male".into(),
            "0" | "0.0" => "female".into(),
            other => return Err(Error::Schema(format!("unexpected sex code `{other}`"))),
        };
    }
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = table.len() / 2;
    let (a, b) = order.split_at(cut);
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    Ok((table.select(&a), table.select(&b)))
}
