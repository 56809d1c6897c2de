//! Fixtures and schema checks shared by the CLI test targets.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sandgraph::fixtures::{ActivityStreamSpec, PlantedBowTieSpec};
use sandgraph::BowTieLabel;
use sandgraph_cli::{cmd_generate, GenerateTarget};
use serde_json::{Map, Value};

/// Set to regenerate the golden schema files instead of comparing.
pub const BLESS_ENV: &str = "SANDGRAPH_BLESS";

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// An activity stream whose 400 days cover every built-in event.
pub fn activity_spec(seed: u64) -> ActivityStreamSpec {
    ActivityStreamSpec {
        n_days: 400,
        seed,
        // 2021-10-01T00:00:00Z
        start: 1_633_046_400,
        ..ActivityStreamSpec::default()
    }
}

/// Writes `name` into `dir` and returns the data file path.
pub fn generate(dir: &Path, name: &str, target: GenerateTarget) -> PathBuf {
    let path = dir.join(name);
    cmd_generate(&target, &path, None).expect("fixture generation");
    path
}

/// Header row of the CSV input format.
pub const CSV_HEADER: &str =
    "hash,logIndex,from,to,contractAddress,timeStamp,value,kind,tokenContract";

/// One dataset per supported shape: activity CSV, activity JSON Lines, a
/// planted bow-tie and an empty export.
pub fn fixture_inputs(dir: &Path) -> Vec<PathBuf> {
    let empty = dir.join("empty.csv");
    std::fs::write(&empty, format!("{CSV_HEADER}\n")).unwrap();
    vec![
        generate(
            dir,
            "activity.csv",
            GenerateTarget::Activity(activity_spec(1)),
        ),
        generate(
            dir,
            "activity.jsonl",
            GenerateTarget::Activity(activity_spec(2)),
        ),
        generate(
            dir,
            "planted.csv",
            GenerateTarget::BowTie(PlantedBowTieSpec::from_sizes(
                [12, 5, 6, 2, 3, 3, 4],
                7,
                0.3,
            )),
        ),
        empty,
    ]
}

/// Replaces every leaf with its JSON type name. Arrays collapse to the
/// skeleton of their elements, which must agree.
pub fn skeleton(v: &Value) -> Result<Value, String> {
    Ok(match v {
        Value::Null => Value::from("null"),
        Value::Bool(_) => Value::from("bool"),
        Value::Number(n) if n.is_f64() => Value::from("float"),
        Value::Number(_) => Value::from("integer"),
        Value::String(_) => Value::from("string"),
        Value::Array(items) => {
            let mut shapes = items.iter().map(skeleton);
            match shapes.next() {
                None => Value::Array(Vec::new()),
                Some(first) => {
                    let first = first?;
                    for s in shapes {
                        if s? != first {
                            return Err("array elements differ in shape".into());
                        }
                    }
                    Value::Array(vec![first])
                }
            }
        }
        Value::Object(m) => {
            let mut out = Map::new();
            for (k, v) in m {
                out.insert(k.clone(), skeleton(v)?);
            }
            Value::Object(out)
        }
    })
}

pub fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn csv_header(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.lines().next().unwrap_or_default().to_string())
}

fn bless() -> bool {
    std::env::var_os(BLESS_ENV).is_some()
}

const NULLABLE: &str = "$nullable";

fn nullable(inner: Value) -> Value {
    let mut m = Map::new();
    m.insert(NULLABLE.into(), inner);
    Value::Object(m)
}

fn nullable_inner(v: &Value) -> Option<&Value> {
    v.as_object()
        .filter(|m| m.len() == 1)
        .and_then(|m| m.get(NULLABLE))
}

/// Widens schema `a` so that skeleton `b` also conforms to it.
fn merge(a: &Value, b: &Value) -> Value {
    if let Some(inner) = nullable_inner(a) {
        return match b.as_str() {
            Some("null") => a.clone(),
            _ => nullable(merge(inner, b)),
        };
    }
    match (a, b) {
        _ if a == b => a.clone(),
        (Value::String(s), _) if s == "null" => nullable(b.clone()),
        (_, Value::String(s)) if s == "null" => nullable(a.clone()),
        (Value::Array(x), Value::Array(y)) => match (x.first(), y.first()) {
            (Some(x), Some(y)) => Value::Array(vec![merge(x, y)]),
            (Some(_), None) => a.clone(),
            _ => b.clone(),
        },
        (Value::Object(x), Value::Object(y)) => {
            let mut out = x.clone();
            for (k, v) in y {
                let merged = match x.get(k) {
                    Some(old) => merge(old, v),
                    None => v.clone(),
                };
                out.insert(k.clone(), merged);
            }
            Value::Object(out)
        }
        _ => b.clone(),
    }
}

/// Whether skeleton `got` is an instance of schema `want`. Empty arrays
/// conform to any array schema.
pub fn conforms(got: &Value, want: &Value) -> bool {
    if let Some(inner) = nullable_inner(want) {
        return got.as_str() == Some("null") || conforms(got, inner);
    }
    match (got, want) {
        (Value::Array(g), Value::Array(w)) => match (g.first(), w.first()) {
            (None, _) => true,
            (Some(g), Some(w)) => conforms(g, w),
            (Some(_), None) => false,
        },
        (Value::Object(g), Value::Object(w)) => {
            g.len() == w.len()
                && g.iter()
                    .all(|(k, v)| w.get(k).is_some_and(|wv| conforms(v, wv)))
        }
        _ => got == want,
    }
}

/// Checks the skeleton of `out/<rel>` against `golden/<golden>`. With
/// blessing on, the golden schema is first widened to admit it.
pub fn check_json_schema(out: &Path, rel: &str, golden: &str) -> Result<(), String> {
    let got = skeleton(&read_json(&out.join(rel))?).map_err(|e| format!("{rel}: {e}"))?;
    let path = golden_dir().join(golden);
    if bless() {
        let merged = match read_json(&path) {
            Ok(old) => merge(&old, &got),
            Err(_) => got.clone(),
        };
        let mut text = serde_json::to_string_pretty(&merged).unwrap();
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| e.to_string())?;
    }
    let want = read_json(&path)?;
    if !conforms(&got, &want) {
        return Err(format!(
            "{rel} does not match {golden}:\n{}",
            serde_json::to_string_pretty(&got).unwrap()
        ));
    }
    Ok(())
}

const HEADERS_FILE: &str = "csv_headers.txt";

/// Golden CSV headers, one `<file>\t<header>` line each.
pub fn golden_headers() -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(golden_dir().join(HEADERS_FILE))
        .map_err(|e| format!("{HEADERS_FILE}: {e}"))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(f, h)| (f.to_string(), h.to_string()))
        .collect())
}

pub fn check_csv_headers(out: &Path, files: &[&str]) -> Result<(), String> {
    if bless() {
        let mut all = golden_headers().unwrap_or_default();
        for f in files {
            all.insert(f.to_string(), csv_header(&out.join(f))?);
        }
        let text: String = all.iter().map(|(f, h)| format!("{f}\t{h}\n")).collect();
        std::fs::write(golden_dir().join(HEADERS_FILE), text).map_err(|e| e.to_string())?;
    }
    let want = golden_headers()?;
    for f in files {
        let got = csv_header(&out.join(f))?;
        match want.get(*f) {
            Some(h) if *h == got => {}
            Some(h) => return Err(format!("{f} header {got:?}, golden {h:?}")),
            None => return Err(format!("{f} has no golden header")),
        }
    }
    Ok(())
}

fn as_u64(v: &Value, what: &str) -> Result<u64, String> {
    v.as_u64()
        .ok_or_else(|| format!("{what} is not an integer"))
}

/// Seven categories in canonical order whose counts sum to `total` and
/// whose percentages match the counts.
pub fn check_category_table(table: &Value, total: u64, what: &str) -> Result<(), String> {
    let rows = table
        .as_array()
        .ok_or_else(|| format!("{what} is not an array"))?;
    let labels: Vec<&str> = rows.iter().filter_map(|r| r["label"].as_str()).collect();
    let want: Vec<&str> = BowTieLabel::ALL.iter().map(|l| l.as_str()).collect();
    if labels != want {
        return Err(format!("{what} labels {labels:?}"));
    }
    let mut sum = 0;
    for r in rows {
        let count = as_u64(&r["count"], what)?;
        sum += count;
        let pct = r["percent"]
            .as_f64()
            .ok_or_else(|| format!("{what} percent"))?;
        let expect = if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        };
        if (pct - expect).abs() > 1e-9 {
            return Err(format!("{what} percent {pct} for count {count} of {total}"));
        }
    }
    if sum != total {
        return Err(format!("{what} counts sum to {sum}, expected {total}"));
    }
    Ok(())
}

/// The bow-tie and whale summaries carry the reported statistics: seven
/// categories with counts and percentages, current and historical whale
/// counts and four average-degree variants.
pub fn check_summary_content(out: &Path) -> Result<(), String> {
    let bowtie = read_json(&out.join("bowtie_summary.json"))?;
    let nodes = as_u64(&bowtie["node_count"], "node_count")?;
    check_category_table(&bowtie["categories"], nodes, "bowtie categories")?;

    let whales = read_json(&out.join("whales_summary.json"))?;
    for group in ["current_whales", "historical_whales"] {
        let g = &whales[group];
        let count = as_u64(&g["count"], group)?;
        let absent = as_u64(&g["absent_from_graph"], group)?;
        check_category_table(&g["by_label"], count - absent, group)?;
    }
    let current = as_u64(&whales["current_whales"]["count"], "current")?;
    let historical = as_u64(&whales["historical_whales"]["count"], "historical")?;
    if current > historical {
        return Err(format!(
            "{current} current whales exceed {historical} historical"
        ));
    }
    let degrees = whales["average_degree"]
        .as_object()
        .ok_or("average_degree is not an object")?;
    let keys: Vec<&str> = degrees.keys().map(String::as_str).collect();
    let want = [
        "current_whales",
        "historical_whales",
        "network",
        "network_excluding_whales",
    ];
    let mut sorted = keys.clone();
    sorted.sort_unstable();
    if sorted != want {
        return Err(format!("average_degree variants {keys:?}"));
    }
    for (k, d) in degrees {
        if d.is_null() {
            continue;
        }
        let sum = as_u64(&d["degree_sum"], k)? as f64;
        let pop = as_u64(&d["population"], k)? as f64;
        let value = d["value"].as_f64().ok_or_else(|| format!("{k} value"))?;
        if (value - sum / pop).abs() > 1e-9 {
            return Err(format!("{k} average {value} != {sum}/{pop}"));
        }
    }
    Ok(())
}

/// Every file under `root` keyed by its relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(root)
        .into_iter()
        .map(|e| e.expect("walk output tree"))
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e
                .path()
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .into_owned();
            (rel, std::fs::read(e.path()).unwrap())
        })
        .collect()
}
