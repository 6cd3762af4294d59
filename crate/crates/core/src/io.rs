//! File formats shared by the library and the command-line interface.
//!
//! Parameters travel as flat JSON objects with snake_case keys; time
//! constants are quoted in microseconds there (`c1_us`, `c0_us`)
//! because hardware specs are, and get converted to seconds on
//! ingestion. Tabular data travels as CSV with mandatory headers.
//! Floating-point numbers are written with 17 significant digits so a
//! round trip through text reproduces the exact value.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{SurvivalData, SurvivalRow, VarianceSample};
use crate::mc::{ConfigSpread, EstimateMatrix, MCSummary, TruthModel};
use crate::model::{DecayParams, RBConfig, TimeParams, VarianceParams};
use crate::optimizer::{OptimizeSpec, PerM, SweepRow, Variant};

/// Format a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Flat parameter file; every key is optional so files, flags, and
/// defaults can be merged.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_min: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_fixed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max_bound: Option<u64>,
}

impl ParamsFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Overlay `over` on `self`: any key present in `over` wins.
    pub fn merged_with(&self, over: &ParamsFile) -> ParamsFile {
        macro_rules! pick {
            ($field:ident) => {
                over.$field.clone().or_else(|| self.$field.clone())
            };
        }
        ParamsFile {
            q: pick!(q),
            beta: pick!(beta),
            p_hat: pick!(p_hat),
            dim: pick!(dim),
            c1_us: pick!(c1_us),
            c0_us: pick!(c0_us),
            budget_s: pick!(budget_s),
            alpha: pick!(alpha),
            m_max: pick!(m_max),
            variant: pick!(variant),
            n_min: pick!(n_min),
            k_fixed: pick!(k_fixed),
            m_max_bound: pick!(m_max_bound),
        }
    }

    /// Fill defaults and validate into a fully resolved set.
    pub fn resolve(&self) -> Result<ResolvedParams> {
        let require = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| {
                Error::invalid(format!(
                    "parameter '{name}' is required (set it in the params file or as a flag)"
                ))
            })
        };
        let variant: Variant = self
            .variant
            .as_deref()
            .map(str::parse)
            .transpose()?
            .unwrap_or(Variant::FreeN);
        let resolved = ResolvedParams {
            q: require("q", self.q)?,
            beta: require("beta", self.beta)?,
            p_hat: require("p_hat", self.p_hat)?,
            dim: self.dim.unwrap_or(4),
            c1_us: require("c1_us", self.c1_us)?,
            c0_us: require("c0_us", self.c0_us)?,
            budget_s: require("budget_s", self.budget_s)?,
            alpha: self.alpha.unwrap_or(0.05),
            m_max: self.m_max.unwrap_or(40),
            variant,
            n_min: self.n_min.unwrap_or(match variant {
                Variant::FreeN => 5,
                Variant::IdenticalN => 1,
            }),
            k_fixed: self.k_fixed.unwrap_or(100),
            m_max_bound: self.m_max_bound.unwrap_or(1024),
        };
        // constructing the model types validates the numbers
        resolved.variance_params()?;
        resolved.time_params()?;
        Ok(resolved)
    }
}

/// A fully resolved parameter set; echoed into every output file so a
/// result is reproducible from the file alone.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolvedParams {
    pub q: f64,
    pub beta: f64,
    pub p_hat: f64,
    pub dim: u32,
    pub c1_us: f64,
    pub c0_us: f64,
    pub budget_s: f64,
    pub alpha: f64,
    pub m_max: usize,
    pub variant: Variant,
    pub n_min: u64,
    pub k_fixed: u64,
    pub m_max_bound: u64,
}

impl ResolvedParams {
    pub fn variance_params(&self) -> Result<VarianceParams> {
        VarianceParams::new(self.q, self.beta, self.p_hat, self.dim)
    }

    pub fn time_params(&self) -> Result<TimeParams> {
        TimeParams::from_micros(self.c1_us, self.c0_us, self.budget_s)
    }

    pub fn optimize_spec(&self) -> Result<OptimizeSpec> {
        let mut spec = OptimizeSpec::new(self.variance_params()?, self.time_params()?);
        spec.alpha = self.alpha;
        spec.m_max = self.m_max;
        spec.variant = self.variant;
        spec.n_min = self.n_min;
        spec.k_fixed = self.k_fixed;
        spec.m_max_bound = self.m_max_bound;
        Ok(spec)
    }
}

/// Flat truth file for the simulation harness: the decay curve plus the
/// variance parameters that generate (and weight) the synthetic data.
#[derive(Debug, Clone, Deserialize)]
pub struct TruthFile {
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub beta: f64,
    #[serde(default)]
    pub p_hat: Option<f64>,
    #[serde(default)]
    pub dim: Option<u32>,
}

impl TruthFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn truth_model(&self) -> Result<TruthModel> {
        Ok(TruthModel::new(
            DecayParams::new(self.p, self.a, self.b)?,
            VarianceParams::new(
                self.q,
                self.beta,
                self.p_hat.unwrap_or(self.p),
                self.dim.unwrap_or(4),
            )?,
        ))
    }
}

pub fn read_config_json(path: &Path) -> Result<RBConfig> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Serialize any report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Read survival data from CSV with header `m,y,n,k`.
pub fn read_survival_csv(path: &Path) -> Result<SurvivalData> {
    let mut reader = csv::Reader::from_path(path)?;
    expect_headers(&mut reader, &["m", "y", "n", "k"])?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let (m, y, n, k): (u64, f64, u64, u64) = record?;
        rows.push(SurvivalRow { m, y, n, k });
    }
    SurvivalData::new(rows)
}

pub fn write_survival_csv(path: &Path, data: &SurvivalData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["m", "y", "n", "k"])?;
    for row in data.rows() {
        w.write_record(&[
            row.m.to_string(),
            fmt_f64(row.y),
            row.n.to_string(),
            row.k.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read variance samples from CSV with header `m,var,k`.
pub fn read_variance_csv(path: &Path) -> Result<Vec<VarianceSample>> {
    let mut reader = csv::Reader::from_path(path)?;
    expect_headers(&mut reader, &["m", "var", "k"])?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let (m, var, k): (u64, f64, u64) = record?;
        rows.push(VarianceSample { m, var, k });
    }
    Ok(rows)
}

/// Read a `job,config,p_hat` matrix.
pub fn read_matrix_csv(path: &Path) -> Result<EstimateMatrix> {
    let mut reader = csv::Reader::from_path(path)?;
    expect_headers(&mut reader, &["job", "config", "p_hat"])?;
    let mut records = Vec::new();
    for record in reader.deserialize() {
        let (job, config, p_hat): (String, String, f64) = record?;
        records.push((job, config, p_hat));
    }
    EstimateMatrix::from_records(&records)
}

/// Write per-configuration spreads as `config,adjusted_std,raw_std,mean_p_hat`.
pub fn write_adjusted_csv(path: &Path, spreads: &[ConfigSpread]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config", "adjusted_std", "raw_std", "mean_p_hat"])?;
    for s in spreads {
        w.write_record(&[
            s.config.clone(),
            fmt_f64(s.adjusted_std),
            fmt_f64(s.raw_std),
            fmt_f64(s.mean_p_hat),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write campaign details as `run,p_hat,ci_halfwidth,covered` (0/1).
pub fn write_campaign_csv(path: &Path, summary: &MCSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run", "p_hat", "ci_halfwidth", "covered"])?;
    for rec in &summary.records {
        w.write_record(&[
            rec.run.to_string(),
            fmt_f64(rec.p_hat),
            fmt_f64(rec.ci_halfwidth),
            if rec.covered { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write the per-`M` sweep table as `M,h_relaxed,h_rounded,t_rounded,feasible`.
pub fn write_per_m_csv(path: &Path, rows: &[PerM]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["M", "h_relaxed", "h_rounded", "t_rounded", "feasible"])?;
    for r in rows {
        w.write_record(&[
            r.m_count.to_string(),
            fmt_f64(r.h_relaxed),
            fmt_f64(r.h_rounded),
            fmt_f64(r.t_rounded),
            if r.feasible { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write a prediction surface as `p_hat,M,h`.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["p_hat", "M", "h"])?;
    for r in rows {
        w.write_record(&[fmt_f64(r.p_hat), r.m_count.to_string(), fmt_f64(r.h)])?;
    }
    w.flush()?;
    Ok(())
}

fn expect_headers(reader: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers()?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::invalid(format!(
            "expected CSV header '{}', got '{}'",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmpfile(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("rbplan-io-tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn params_merge_and_resolve() {
        let file: ParamsFile = serde_json::from_str(
            r#"{"q": 0.97, "beta": 0.0025, "p_hat": 0.97, "c1_us": 0.6, "c0_us": 250.0, "budget_s": 3.0}"#,
        )
        .unwrap();
        let over = ParamsFile {
            budget_s: Some(6.0),
            ..Default::default()
        };
        let resolved = file.merged_with(&over).resolve().unwrap();
        assert_eq!(resolved.budget_s, 6.0);
        assert_eq!(resolved.alpha, 0.05);
        assert_eq!(resolved.dim, 4);
        assert_eq!(resolved.n_min, 5);
        assert_eq!(resolved.k_fixed, 100);

        let tp = resolved.time_params().unwrap();
        assert!((tp.c1() - 0.6e-6).abs() < 1e-18);

        let missing = ParamsFile::default().resolve().unwrap_err();
        assert!(missing.to_string().contains("required"), "{missing}");
    }

    #[test]
    fn identical_n_default_follows_variant() {
        let file: ParamsFile = serde_json::from_str(
            r#"{"q": 0.97, "beta": 0.0025, "p_hat": 0.97, "c1_us": 0.6, "c0_us": 250.0,
                "budget_s": 3.0, "variant": "identical-n"}"#,
        )
        .unwrap();
        let resolved = file.resolve().unwrap();
        assert_eq!(resolved.variant, Variant::IdenticalN);
        assert_eq!(resolved.n_min, 1);
    }

    #[test]
    fn survival_csv_round_trip() {
        let rows: Vec<SurvivalRow> = (0..6)
            .map(|i| SurvivalRow {
                m: 10 * i + 1,
                y: 0.9 - 0.07 * i as f64 + 1e-13,
                n: 5,
                k: 100,
            })
            .collect();
        let data = SurvivalData::new(rows).unwrap();
        let path = std::env::temp_dir().join("rbplan-io-tests-survival.csv");
        write_survival_csv(&path, &data).unwrap();
        let back = read_survival_csv(&path).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn header_mismatch_is_reported() {
        let path = tmpfile("bad_header.csv", "m,value,k\n1,0.1,100\n");
        let err = read_variance_csv(&path).unwrap_err();
        assert!(err.to_string().contains("m,var,k"), "{err}");
    }

    #[test]
    fn fmt_round_trips_exactly() {
        for v in [
            0.1,
            2.926875e-4,
            1.0 / 3.0,
            6.02e23,
            f64::MIN_POSITIVE,
            -0.000123456789012345678,
        ] {
            let parsed: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(parsed, v, "{v} -> {}", fmt_f64(v));
        }
    }

    #[test]
    fn truth_file_defaults() {
        let path = tmpfile(
            "truth.json",
            r#"{"p": 0.97, "a": 0.75, "b": 0.25, "q": 0.97, "beta": 0.0025}"#,
        );
        let truth = TruthFile::read(&path).unwrap().truth_model().unwrap();
        assert_eq!(truth.vp.p_hat(), 0.97);
        assert_eq!(truth.vp.dim(), 4);
    }
}
