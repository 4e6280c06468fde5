use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    max_distance, synthesize_example, ArrayGeometry, MixtureExample, RoomSpec, SceneSpec,
    SourcePlacement, DEFAULT_NOISE_DB,
};
use crate::features::near_mic_select;
use crate::signal::wav::{read_wav, write_mono, write_wav, WavFormat};
use crate::signal::Waveform;
use crate::{Error, Result};

pub const WIDTH_RANGE: (f64, f64) = (2.5, 5.0);
pub const LENGTH_RANGE: (f64, f64) = (3.0, 9.0);
pub const HEIGHT_RANGE: (f64, f64) = (2.2, 3.5);
pub const T60_RANGE: (f64, f64) = (0.2, 0.5);
pub const SNR_RANGE: (f64, f64) = (-5.0, 10.0);
pub const FIXED_TARGET_RANGE: (f64, f64) = (85.0, 95.0);
/// Angular gap between target and interferer in the variable-target set,
/// and the minimum gap in the fixed-target set.
pub const INTERFERER_SEPARATION: f64 = 15.0;

const SOURCE_DISTANCE: (f64, f64) = (1.0, 2.5);
const SOURCE_HEIGHT: (f64, f64) = (1.2, 1.9);
const ARRAY_HEIGHT: f64 = 1.5;
const ARRAY_JITTER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// Target between 85° and 95°, interferer anywhere at least 15° away.
    Fixed,
    /// Target anywhere, interferer exactly 15° away.
    Variable,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "variable" => Ok(Self::Variable),
            other => Err(Error::Config(format!(
                "unknown dataset kind `{other}` (expected fixed or variable)"
            ))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::Variable => "variable",
        })
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo..=hi)
}

/// RNG for example `index` of a dataset; independent of generation order.
pub fn example_rng(dataset_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(dataset_seed);
    rng.set_stream(index);
    rng
}

/// Room drawn uniformly from the training ranges.
pub fn sample_room(seed: u64) -> RoomSpec {
    sample_room_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_room_with(rng: &mut ChaCha8Rng) -> RoomSpec {
    RoomSpec {
        width: uniform(rng, WIDTH_RANGE),
        length: uniform(rng, LENGTH_RANGE),
        height: uniform(rng, HEIGHT_RANGE),
        t60: uniform(rng, T60_RANGE),
    }
}

/// Array near the room centre, axis along x.
pub fn sample_array(rng: &mut ChaCha8Rng, room: &RoomSpec) -> ArrayGeometry {
    let jitter = |rng: &mut ChaCha8Rng, extent: f64| {
        let j = ARRAY_JITTER.min(extent / 2.0 - 0.5);
        extent / 2.0 + rng.gen_range(-j..=j)
    };
    let center = [jitter(rng, room.width), jitter(rng, room.length), ARRAY_HEIGHT.min(room.height - 0.2)];
    ArrayGeometry::default_at(center)
}

/// Source at `azimuth` with a random distance and height, pulled in towards
/// the array when the room is too small for the drawn distance.
pub fn place_source(
    rng: &mut ChaCha8Rng,
    room: &RoomSpec,
    array: &ArrayGeometry,
    azimuth: f64,
) -> Result<SourcePlacement> {
    let wanted = uniform(rng, SOURCE_DISTANCE);
    let height = uniform(rng, SOURCE_HEIGHT).min(room.height - 0.2);
    let limit = max_distance(room, array, azimuth) - 1e-6;
    let src = SourcePlacement::new(array, azimuth, wanted.min(limit), height)?;
    src.validate_in(room)?;
    Ok(src)
}

/// Target and interferer azimuths for one example.
pub fn sample_azimuths(rng: &mut ChaCha8Rng, kind: DatasetKind) -> (f64, f64) {
    match kind {
        DatasetKind::Fixed => {
            let target = uniform(rng, FIXED_TARGET_RANGE);
            loop {
                let inter = rng.gen_range(0.0..=180.0);
                if (inter - target).abs() >= INTERFERER_SEPARATION {
                    return (target, inter);
                }
            }
        }
        DatasetKind::Variable => {
            let target = rng.gen_range(0.0..=180.0);
            let below = target - INTERFERER_SEPARATION;
            let above = target + INTERFERER_SEPARATION;
            // The side is random unless one side leaves [0, 180].
            let inter = if below < 0.0 {
                above
            } else if above > 180.0 || rng.gen_bool(0.5) {
                below
            } else {
                above
            };
            (target, inter)
        }
    }
}

/// A complete random scene for example `index`.
pub fn sample_scene(kind: DatasetKind, dataset_seed: u64, index: u64) -> Result<SceneSpec> {
    let mut rng = example_rng(dataset_seed, index);
    let room = sample_room_with(&mut rng);
    let array = sample_array(&mut rng, &room);
    let (ta, ia) = sample_azimuths(&mut rng, kind);
    let target = place_source(&mut rng, &room, &array, ta)?;
    let interferer = place_source(&mut rng, &room, &array, ia)?;
    let snr_db = uniform(&mut rng, SNR_RANGE);
    Ok(SceneSpec {
        room,
        array,
        target,
        interferer,
        snr_db,
        seed: rng.gen(),
    })
}

/// Scene for a prescribed target/interferer pair, used by evaluation sweeps.
pub fn scene_at(
    seed: u64,
    index: u64,
    target_azimuth: f64,
    interferer_azimuth: f64,
    snr_db: f64,
) -> Result<SceneSpec> {
    let mut rng = example_rng(seed, index);
    let room = sample_room_with(&mut rng);
    let array = sample_array(&mut rng, &room);
    let target = place_source(&mut rng, &room, &array, target_azimuth)?;
    let interferer = place_source(&mut rng, &room, &array, interferer_azimuth)?;
    Ok(SceneSpec {
        room,
        array,
        target,
        interferer,
        snr_db,
        seed: rng.gen(),
    })
}

/// Which utterances of the pool an example uses.
pub fn pick_utterances(scene: &SceneSpec, pool_len: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let t = rng.gen_range(0..pool_len);
    if pool_len == 1 {
        return (0, 0);
    }
    let mut i = rng.gen_range(0..pool_len - 1);
    if i >= t {
        i += 1;
    }
    (t, i)
}

/// `count` examples of the given kind. Example `i` depends only on
/// `(rng_seed, i)` and the pool.
pub fn build_dataset(
    kind: DatasetKind,
    count: usize,
    rng_seed: u64,
    speech_pool: &[Waveform],
) -> Result<Vec<MixtureExample>> {
    if speech_pool.is_empty() {
        return Err(Error::Input("speech pool is empty".into()));
    }
    (0..count as u64)
        .map(|i| {
            let scene = sample_scene(kind, rng_seed, i)?;
            let (t, n) = pick_utterances(&scene, speech_pool.len());
            synthesize_example(&scene, &speech_pool[t], &speech_pool[n], Some(DEFAULT_NOISE_DB))
        })
        .collect()
}

/// One line of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub kind: DatasetKind,
    pub seed: u64,
    pub near_mic: usize,
    pub mixture: String,
    pub reference: String,
    pub scene: SceneSpec,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Writes `mix_XXXXX.wav` (stereo), `ref_XXXXX.wav` (mono) and a manifest
/// line per example into `dir`.
pub fn write_dataset(dir: &Path, kind: DatasetKind, examples: &[MixtureExample]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = BufWriter::new(File::create(dir.join(MANIFEST_NAME))?);
    for (i, ex) in examples.iter().enumerate() {
        let mix = format!("mix_{i:05}.wav");
        let reference = format!("ref_{i:05}.wav");
        write_wav(dir.join(&mix), &ex.mixture, WavFormat::Float32)?;
        write_mono(dir.join(&reference), &ex.target_reference, WavFormat::Float32)?;
        let entry = ManifestEntry {
            index: i,
            kind,
            seed: ex.metadata.seed,
            near_mic: ex.near_mic.number(),
            mixture: mix,
            reference,
            scene: ex.metadata,
        };
        serde_json::to_writer(&mut manifest, &entry)?;
        manifest.write_all(b"\n")?;
    }
    manifest.flush()?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let file = File::open(dir.join(MANIFEST_NAME))?;
    BufReader::new(file)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|line| Ok(serde_json::from_str(&line?)?))
        .collect()
}

pub fn read_dataset(dir: &Path) -> Result<Vec<MixtureExample>> {
    read_manifest(dir)?
        .into_iter()
        .map(|e| {
            let path = |name: &str| -> PathBuf { dir.join(name) };
            let mixture = read_wav(path(&e.mixture))?;
            mixture.require_stereo()?;
            let reference = read_wav(path(&e.reference))?.into_channels().remove(0);
            let near_mic = near_mic_select(e.scene.target.azimuth);
            if near_mic.number() != e.near_mic {
                return Err(Error::Data(format!(
                    "manifest line {} names mic {} but the target azimuth selects mic {}",
                    e.index,
                    e.near_mic,
                    near_mic.number()
                )));
            }
            Ok(MixtureExample {
                mixture,
                target_reference: reference,
                near_mic,
                metadata: e.scene,
            })
        })
        .collect()
}
