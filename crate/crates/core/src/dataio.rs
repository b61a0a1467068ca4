//! Expression-data CSV, design CSV, JSON reports, domain maps and seeded splits.
//!
//! The canonical input is a UTF-8 CSV with header `gene,channel,x,t,value`
//! (x in percent egg length, t in minutes). Loading never drops rows
//! silently: every data row ends up either in `records` or in `rejected`
//! with its line number.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Channel, ChannelObservations, FitResult, Hyperparameters, ModelVariant, PosteriorField, SpaceTimeDesign, TracePoint};
use crate::kernel_mrna::GreensConfig;
use crate::kernel_se::SpaceTimePoint;
use crate::metrics::ChannelScores;

pub const HEADER: [&str; 5] = ["gene", "channel", "x", "t", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionRecord {
    pub gene: String,
    pub channel: Channel,
    pub x: f64,
    pub t: f64,
    pub value: f64,
}

impl ExpressionRecord {
    pub fn point(&self) -> SpaceTimePoint<f64> {
        SpaceTimePoint::new(self.x, self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Admissible x range; rows outside are rejected.
    pub x_range: (f64, f64),
    /// Rows with `t` inside this closed window are rejected (e.g. early times).
    pub exclude_time: Option<(f64, f64)>,
    /// Turn the first rejection into an error instead of collecting it.
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { x_range: (0.0, 100.0), exclude_time: None, strict: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line in the file (the header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub records: Vec<ExpressionRecord>,
    pub rejected: Vec<Rejection>,
    /// Number of data rows read; always `records.len() + rejected.len()`.
    pub rows: usize,
}

fn parse_num(field: &str, name: &str) -> std::result::Result<f64, String> {
    let v: f64 = field.trim().parse().map_err(|_| format!("{name} {field:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} {field:?} is not finite"))
    }
}

fn parse_row(row: &csv::StringRecord, opts: &LoadOptions) -> std::result::Result<ExpressionRecord, String> {
    let channel: Channel = row[1].parse().map_err(|_| format!("unknown channel {:?}", &row[1]))?;
    let x = parse_num(&row[2], "x")?;
    let t = parse_num(&row[3], "t")?;
    let value = parse_num(&row[4], "value")?;
    if x < opts.x_range.0 || x > opts.x_range.1 {
        return Err(format!("x = {x} outside [{}, {}]", opts.x_range.0, opts.x_range.1));
    }
    if t < 0.0 {
        return Err(format!("t = {t} is negative"));
    }
    if let Some((a, b)) = opts.exclude_time {
        if (a..=b).contains(&t) {
            return Err(format!("t = {t} inside excluded window [{a}, {b}]"));
        }
    }
    Ok(ExpressionRecord { gene: row[0].trim().to_string(), channel, x, t, value })
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if header != HEADER {
        return Err(Error::Parse { line: 1, message: format!("expected header {}, got {}", HEADER.join(","), header.join(",")) });
    }
    let mut report = LoadReport::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != HEADER.len() {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", HEADER.len(), row.len()) });
        }
        report.rows += 1;
        match parse_row(&row, opts) {
            Ok(r) => report.records.push(r),
            Err(reason) if opts.strict => return Err(Error::Parse { line, message: reason }),
            Err(reason) => report.rejected.push(Rejection { line, reason }),
        }
    }
    Ok(report)
}

/// Writes records with shortest round-trip float formatting, atomically.
pub fn save_csv(path: impl AsRef<Path>, records: &[ExpressionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([r.gene.clone(), r.channel.as_str().to_string(), r.x.to_string(), r.t.to_string(), r.value.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn save_design(path: impl AsRef<Path>, design: &SpaceTimeDesign) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "t"])?;
    for p in &design.points {
        w.write_record([p.x.to_string(), p.t.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn load_design(path: impl AsRef<Path>) -> Result<SpaceTimeDesign> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if header != ["x", "t"] {
        return Err(Error::Parse { line: 1, message: format!("expected header x,t, got {}", header.join(",")) });
    }
    let mut points = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |i: usize, name: &str| parse_num(&row[i], name).map_err(|message| Error::Parse { line, message });
        points.push(SpaceTimePoint::new(parse(0, "x")?, parse(1, "t")?));
    }
    Ok(SpaceTimeDesign::new(points))
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Axis-aligned box `[x0, x1] × [t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub x: (f64, f64),
    pub t: (f64, f64),
}

impl DomainBox {
    pub fn new(x: (f64, f64), t: (f64, f64)) -> Result<Self> {
        let b = Self { x, t };
        b.validate()?;
        Ok(b)
    }

    pub fn unit() -> Self {
        Self { x: (0.0, 1.0), t: (0.0, 1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (a, b)) in [("x", self.x), ("t", self.t)] {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::Config(format!("degenerate {name} range [{a}, {b}]")));
            }
        }
        Ok(())
    }

    /// Smallest box holding every record.
    pub fn bounding(records: &[ExpressionRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Config("no records to bound".into()));
        }
        let fold = |f: fn(&ExpressionRecord) -> f64| {
            records.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        Self::new(fold(|r| r.x), fold(|r| r.t))
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        (self.x.0..=self.x.1).contains(&x) && (self.t.0..=self.t.1).contains(&t)
    }
}

/// Independent affine maps `x ↦ ax·x + bx`, `t ↦ at·t + bt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap2 {
    pub x_scale: f64,
    pub x_offset: f64,
    pub t_scale: f64,
    pub t_offset: f64,
}

impl AffineMap2 {
    /// The map taking `from` onto `to` corner to corner.
    pub fn between(from: &DomainBox, to: &DomainBox) -> Result<Self> {
        from.validate()?;
        to.validate()?;
        let x_scale = (to.x.1 - to.x.0) / (from.x.1 - from.x.0);
        let t_scale = (to.t.1 - to.t.0) / (from.t.1 - from.t.0);
        Ok(Self { x_scale, x_offset: to.x.0 - x_scale * from.x.0, t_scale, t_offset: to.t.0 - t_scale * from.t.0 })
    }

    pub fn apply(&self, x: f64, t: f64) -> (f64, f64) {
        (self.x_scale * x + self.x_offset, self.t_scale * t + self.t_offset)
    }

    pub fn inverse(&self) -> Self {
        Self {
            x_scale: 1.0 / self.x_scale,
            x_offset: -self.x_offset / self.x_scale,
            t_scale: 1.0 / self.t_scale,
            t_offset: -self.t_offset / self.t_scale,
        }
    }

    pub fn apply_design(&self, d: &SpaceTimeDesign) -> SpaceTimeDesign {
        SpaceTimeDesign::new(
            d.points
                .iter()
                .map(|p| {
                    let (x, t) = self.apply(p.x, p.t);
                    SpaceTimePoint::new(x, t)
                })
                .collect(),
        )
    }
}

/// Maps every record from `source` onto `target` (both channels alike).
pub fn normalize_domain(records: &[ExpressionRecord], source: &DomainBox, target: &DomainBox) -> Result<(Vec<ExpressionRecord>, AffineMap2)> {
    if records.is_empty() {
        return Err(Error::Config("no records to normalise".into()));
    }
    let map = AffineMap2::between(source, target)?;
    let out = records
        .iter()
        .map(|r| {
            let (x, t) = map.apply(r.x, r.t);
            ExpressionRecord { x, t, ..r.clone() }
        })
        .collect();
    Ok((out, map))
}

/// Seeded random split of `0..n` into (train, test) index lists, each sorted.
///
/// The train set has `round(train_frac·n)` entries, kept within `[1, n−1]` when `n ≥ 2`.
pub fn split_train_test(n: usize, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1), got {train_frac}")));
    }
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 rows to split, have {n}")));
    }
    let k = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..k].to_vec();
    let mut test = idx[k..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Records of one channel (and optionally one gene) as GP observations.
pub fn observations(records: &[ExpressionRecord], channel: Channel, gene: Option<&str>, nugget: f64) -> Result<ChannelObservations> {
    let sel: Vec<&ExpressionRecord> = records.iter().filter(|r| r.channel == channel && gene.is_none_or(|g| r.gene == g)).collect();
    ChannelObservations::new(
        channel,
        SpaceTimeDesign::new(sel.iter().map(|r| r.point()).collect()),
        sel.iter().map(|r| r.value).collect(),
        nugget,
    )
}

/// Model settings as stored in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub domain_len: f64,
    pub n_terms: usize,
}

impl ModelSpec {
    pub fn greens(&self) -> Result<GreensConfig<f64>> {
        GreensConfig::new(self.domain_len, self.n_terms)
    }
}

/// JSON report written by `fit`, `predict` and `eval`.
///
/// Stable keys: `model`, `hyperparameters`, `loglik`, `metrics` (per channel
/// `q2`, `smse`, `ca`), `posterior` (per channel `design`, `mean`,
/// `variance`), plus `trace` and the optional `domain_map`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: ModelSpec,
    pub hyperparameters: Hyperparameters,
    pub loglik: Option<f64>,
    #[serde(default)]
    pub metrics: BTreeMap<Channel, ChannelScores>,
    #[serde(default)]
    pub posterior: Vec<PosteriorField>,
    #[serde(default)]
    pub trace: Vec<TracePoint>,
    #[serde(default)]
    pub domain_map: Option<AffineMap2>,
}

impl Report {
    pub fn from_fit(model: ModelSpec, fit: &FitResult) -> Self {
        Self {
            model,
            hyperparameters: fit.hyper,
            loglik: Some(fit.loglik),
            metrics: BTreeMap::new(),
            posterior: vec![],
            trace: fit.trace.clone(),
            domain_map: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("d.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let r = load_csv(write(&dir, "gene,channel,x,t,value\n"), &LoadOptions::default()).unwrap();
        assert!(r.records.is_empty() && r.rejected.is_empty() && r.rows == 0);
    }

    #[test]
    fn rejects_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let body = "gene,channel,x,t,value\nkr,u,10,60,0.5\nkr,z,10,60,0.5\nkr,y,abc,60,1\nkr,y,150,60,1\nkr,y,10,20,1\n";
        let opts = LoadOptions { exclude_time: Some((0.0, 50.0)), ..LoadOptions::default() };
        let r = load_csv(write(&dir, body), &opts).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.rejected.iter().map(|x| x.line).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        assert!(r.rejected[0].reason.contains("channel"));
        assert_eq!(r.rows, r.records.len() + r.rejected.len());
        let strict = LoadOptions { strict: true, ..opts };
        assert!(matches!(load_csv(write(&dir, body), &strict), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn structural_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_csv(write(&dir, "a,b\n1,2\n"), &LoadOptions::default()), Err(Error::Parse { line: 1, .. })));
        let short = "gene,channel,x,t,value\nkr,u,1,2\n";
        assert!(matches!(load_csv(write(&dir, short), &LoadOptions::default()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let recs = vec![
            ExpressionRecord { gene: "kni".into(), channel: Channel::U, x: 0.1 + 0.2, t: 1e-7, value: -3.25 },
            ExpressionRecord { gene: "gt".into(), channel: Channel::Y, x: 99.999, t: 180.0, value: 1.0 / 3.0 },
        ];
        save_csv(&p, &recs).unwrap();
        assert_eq!(load_csv(&p, &LoadOptions::default()).unwrap().records, recs);
    }

    #[test]
    fn design_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let d = SpaceTimeDesign::grid(3, 2, (0.0, 1.0), (0.0, 0.7));
        save_design(&p, &d).unwrap();
        assert_eq!(load_design(&p).unwrap(), d);
    }

    #[test]
    fn affine_maps() {
        let src = DomainBox::new((0.0, 100.0), (0.0, 200.0)).unwrap();
        let m = AffineMap2::between(&src, &DomainBox::unit()).unwrap();
        assert_eq!(m.apply(50.0, 100.0), (0.5, 0.5));
        let inv = m.inverse();
        let (x, t) = inv.apply(m.apply(37.3, 12.9).0, m.apply(37.3, 12.9).1);
        assert!((x - 37.3).abs() < 1e-12 && (t - 12.9).abs() < 1e-12);
        let id = AffineMap2::between(&src, &src).unwrap();
        assert_eq!(id.apply(12.5, 7.0), (12.5, 7.0));
        assert!(DomainBox::new((1.0, 1.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn split_is_seeded_partition() {
        let (a, b) = split_train_test(100, 0.3, 9).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(b.len(), 70);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!((a.clone(), b), split_train_test(100, 0.3, 9).unwrap());
        assert_ne!(a, split_train_test(100, 0.3, 10).unwrap().0);
        assert!(split_train_test(1, 0.3, 0).is_err());
        assert!(split_train_test(10, 1.0, 0).is_err());
    }
}
