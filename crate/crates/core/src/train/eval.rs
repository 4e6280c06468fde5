use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::example_si_snri;
use crate::loss::si_snri_slices;
use crate::model::{Cdunet, EnhancementRequest, MaskSource};
use crate::room::speech::speech_pool;
use crate::room::{pick_utterances, scene_at, synthesize_example, MixtureExample, DEFAULT_NOISE_DB, INTERFERER_SEPARATION};
use crate::{Error, Result, DEFAULT_SAMPLE_RATE};

/// Interference directions of the fixed-target sweep, 0° to 180° in 15° steps.
pub fn interference_angles() -> Vec<f64> {
    (0..=12).map(|k| 15.0 * k as f64).collect()
}

/// Target directions of the variable-target sweep.
pub const TARGET_ANGLES: [f64; 4] = [0.0, 30.0, 60.0, 90.0];

/// Target direction of the fixed-target sweeps.
pub const FIXED_TARGET_DEG: f64 = 90.0;

/// Widths of the width sweep.
pub const SWEEP_WIDTHS: [f64; 6] = [3.0, 5.0, 7.0, 15.0, 20.0, 60.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Scene seed; keep it apart from training seeds.
    pub seed: u64,
    pub scenes_per_cell: usize,
    pub snr_levels: Vec<f64>,
    pub width_deg: f64,
    pub clip_seconds: f64,
    /// Seed of the speech material; keep it apart from the training pool.
    pub pool_seed: u64,
    pub pool_size: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 9_000,
            scenes_per_cell: 3,
            snr_levels: vec![0.0, 5.0],
            width_deg: crate::model::DEFAULT_WIDTH_DEG,
            clip_seconds: 2.0,
            pool_seed: 9_001,
            pool_size: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Target fixed at 90°, one column per interference direction.
    Interference,
    /// One column per target direction, interferer 15° away.
    Target,
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interference" => Ok(Self::Interference),
            "target" => Ok(Self::Target),
            other => Err(Error::Config(format!("unknown sweep `{other}` (expected interference or target)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub label: String,
    pub values: Vec<f64>,
}

/// A labelled grid of mean SI-SNRi values in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub row_label: String,
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn new(row_label: &str, columns: Vec<String>) -> Self {
        Self {
            row_label: row_label.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::Dimension(format!(
                "row of {} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        self.rows.push(ResultRow {
            label: label.into(),
            values,
        });
        Ok(())
    }

    /// Mean over rows of each column.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..self.columns.len())
            .map(|c| self.rows.iter().map(|r| r.values[c]).sum::<f64>() / n)
            .collect()
    }

    /// Mean over every cell.
    pub fn mean(&self) -> f64 {
        let m = self.column_means();
        m.iter().sum::<f64>() / m.len().max(1) as f64
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Data(e.to_string());
        let mut header = vec![self.row_label.clone()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.label.clone()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Data("empty results table".into()))?
            .map_err(|e| Error::Data(e.to_string()))?;
        let mut it = header.iter();
        let row_label = it.next().ok_or_else(|| Error::Data("header has no columns".into()))?;
        let mut table = Self::new(row_label, it.map(str::to_string).collect());
        for rec in records {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            let mut it = rec.iter();
            let label = it.next().unwrap_or_default().to_string();
            let values = it
                .map(|v| v.parse::<f64>().map_err(|_| Error::Data(format!("`{v}` is not a number"))))
                .collect::<Result<Vec<_>>>()?;
            table.push(label, values)?;
        }
        Ok(table)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

fn angle_label(a: f64) -> String {
    format!("{a}")
}

/// Source material for evaluation scenes.
pub fn eval_pool(cfg: &SweepConfig) -> Vec<crate::signal::Waveform> {
    speech_pool(cfg.pool_seed, cfg.pool_size.max(2), cfg.clip_seconds, DEFAULT_SAMPLE_RATE)
}

/// Renders one evaluation scene. Scene `index` fixes the room, array and
/// source distances, so the same index at different angles or SNRs only
/// moves the sources.
pub fn eval_scene(
    cfg: &SweepConfig,
    pool: &[crate::signal::Waveform],
    index: u64,
    target_deg: f64,
    interferer_deg: f64,
    snr_db: f64,
) -> Result<MixtureExample> {
    let scene = scene_at(cfg.seed, index, target_deg, interferer_deg, snr_db)?;
    let (t, i) = pick_utterances(&scene, pool.len());
    synthesize_example(&scene, &pool[t], &pool[i], Some(DEFAULT_NOISE_DB))
}

fn cell_mean(net: &Cdunet, source: MaskSource, scenes: &[MixtureExample], width: f64) -> Result<f64> {
    let mut sum = 0.0;
    for ex in scenes {
        sum += match source {
            MaskSource::Network => example_si_snri(net, ex, width)?,
            other => {
                let mut req = EnhancementRequest::new(ex.mixture.clone(), ex.metadata.target.azimuth, width)?;
                req.mic_spacing = ex.metadata.array.spacing();
                let out = net.enhance_with(&req, other)?;
                si_snri_slices(
                    ex.target_reference.samples(),
                    out.samples(),
                    ex.mixture.mic(ex.near_mic).samples(),
                    crate::loss::LossConfig::default().epsilon,
                )?
            }
        };
    }
    Ok(sum / scenes.len().max(1) as f64)
}

/// Interferer direction paired with `target` in the target sweep.
pub fn paired_interferer(target_deg: f64) -> f64 {
    if target_deg + INTERFERER_SEPARATION <= 180.0 {
        target_deg + INTERFERER_SEPARATION
    } else {
        target_deg - INTERFERER_SEPARATION
    }
}

/// Mean SI-SNRi per (SNR, angle) cell.
pub fn eval_sweep(net: &Cdunet, source: MaskSource, kind: SweepKind, cfg: &SweepConfig) -> Result<ResultsTable> {
    if cfg.scenes_per_cell == 0 || cfg.snr_levels.is_empty() {
        return Err(Error::Config("a sweep needs at least one scene per cell and one SNR".into()));
    }
    let pool = eval_pool(cfg);
    let angles: Vec<f64> = match kind {
        SweepKind::Interference => interference_angles(),
        SweepKind::Target => TARGET_ANGLES.to_vec(),
    };
    let mut table = ResultsTable::new("snr_db", angles.iter().map(|&a| angle_label(a)).collect());
    for &snr in &cfg.snr_levels {
        let mut row = Vec::with_capacity(angles.len());
        for &a in &angles {
            let (target, inter) = match kind {
                SweepKind::Interference => (FIXED_TARGET_DEG, a),
                SweepKind::Target => (a, paired_interferer(a)),
            };
            let scenes = (0..cfg.scenes_per_cell as u64)
                .map(|k| eval_scene(cfg, &pool, k, target, inter, snr))
                .collect::<Result<Vec<_>>>()?;
            row.push(cell_mean(net, source, &scenes, cfg.width_deg)?);
        }
        table.push(angle_label(snr), row)?;
    }
    Ok(table)
}

/// Mean SI-SNRi of a fixed-target model per input width, averaged over
/// every interference direction at the first SNR level.
pub fn width_sweep(net: &Cdunet, widths: &[f64], cfg: &SweepConfig) -> Result<ResultsTable> {
    let snr = *cfg
        .snr_levels
        .first()
        .ok_or_else(|| Error::Config("width sweep needs an SNR level".into()))?;
    let pool = eval_pool(cfg);
    let mut scenes = Vec::new();
    for &a in &interference_angles() {
        for k in 0..cfg.scenes_per_cell as u64 {
            scenes.push(eval_scene(cfg, &pool, k, FIXED_TARGET_DEG, a, snr)?);
        }
    }
    let mut table = ResultsTable::new("width_deg", vec!["si_snri_db".into()]);
    for &w in widths {
        if !(w >= 0.0) {
            return Err(Error::Config(format!("width {w}° must be non-negative")));
        }
        table.push(angle_label(w), vec![cell_mean(net, MaskSource::Network, &scenes, w)?])?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_interference_columns() {
        let a = interference_angles();
        assert_eq!(a.len(), 13);
        assert_eq!((a[0], a[12]), (0.0, 180.0));
    }

    #[test]
    fn table_round_trips_through_csv() {
        let mut t = ResultsTable::new("snr_db", interference_angles().iter().map(|&a| angle_label(a)).collect());
        t.push("0", (0..13).map(|k| k as f64 * 0.1 - 0.333_333_333_333).collect()).unwrap();
        t.push("5", (0..13).map(|k| (k as f64).sqrt()).collect()).unwrap();
        let back = ResultsTable::from_csv(&t.to_csv().unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(t.push("bad", vec![1.0]).is_err());
    }

    #[test]
    fn paired_interferer_stays_in_range() {
        for &t in &TARGET_ANGLES {
            let i = paired_interferer(t);
            assert!((0.0..=180.0).contains(&i));
            assert_eq!((i - t).abs(), INTERFERER_SEPARATION);
        }
        assert_eq!(paired_interferer(175.0), 160.0);
    }
}
