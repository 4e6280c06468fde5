//! Black-box tests of the `cdunet` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cdunet::model::{init_weights, load_weights, ModelConfig, ModelVariant};
use cdunet::room::{read_manifest, DatasetKind, INTERFERER_SEPARATION};
use cdunet::signal::wav::{read_wav, write_mono, write_wav, WavFormat};
use cdunet::signal::{MultiChannelWaveform, Waveform};

fn cdunet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdunet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn simulate(dir: &Path, out: &str, kind: &str, count: usize, seed: u64) {
    let o = cdunet(
        &[
            "simulate", "--kind", kind, "--count", &count.to_string(), "--seed", &seed.to_string(), "--out", out,
            "--clip-seconds", "0.5", "--pool-size", "4",
        ],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn init_weights_file(dir: &Path) -> PathBuf {
    let o = cdunet(&["train", "--data", "d", "--out", "w.bin", "--steps", "0", "--seed", "4"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("w.bin")
}

fn stereo_file(dir: &Path, name: &str, len: usize) -> PathBuf {
    let a: Vec<f64> = (0..len).map(|i| (i as f64 * 0.031).sin() * 0.3).collect();
    let b: Vec<f64> = (0..len).map(|i| (i as f64 * 0.017).cos() * 0.2).collect();
    let m = MultiChannelWaveform::stereo(Waveform::new(a, 16_000).unwrap(), Waveform::new(b, 16_000).unwrap()).unwrap();
    let p = dir.join(name);
    write_wav(&p, &m, WavFormat::Pcm16).unwrap();
    p
}

#[test]
fn simulate_writes_count_lines_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "a", "fixed", 10, 7);
    simulate(tmp.path(), "b", "fixed", 10, 7);
    let manifest = read_manifest(&tmp.path().join("a")).unwrap();
    assert_eq!(manifest.len(), 10);
    assert!(manifest.iter().all(|e| e.kind == DatasetKind::Fixed));
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("b")));

    // Thread count does not change the bytes.
    let o = cdunet(
        &["simulate", "--kind", "fixed", "--count", "10", "--seed", "7", "--out", "c", "--clip-seconds", "0.5",
          "--pool-size", "4", "--jobs", "3"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("c")));
}

#[test]
fn variable_scenes_keep_the_interferer_fifteen_degrees_away() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "v", "variable", 12, 3);
    for e in read_manifest(&tmp.path().join("v")).unwrap() {
        let sep = (e.scene.target.azimuth - e.scene.interferer.azimuth).abs();
        assert!((sep - INTERFERER_SEPARATION).abs() < 1e-6, "separation {sep}");
    }
}

#[test]
fn simulate_from_a_speech_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let speech = tmp.path().join("speech");
    fs::create_dir(&speech).unwrap();
    for k in 0..2 {
        let w = cdunet::room::speech::synth_utterance(k, 1.2, 16_000);
        write_mono(speech.join(format!("u{k}.wav")), &w, WavFormat::Pcm16).unwrap();
    }
    let o = cdunet(
        &["simulate", "--kind", "fixed", "--count", "2", "--out", "d", "--speech", "speech", "--clip-seconds", "0.5"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_manifest(&tmp.path().join("d")).unwrap().len(), 2);

    let o = cdunet(&["simulate", "--kind", "fixed", "--count", "2", "--out", "e", "--speech", "nowhere"], tmp.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn zero_step_training_writes_the_initial_weights() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "d", "fixed", 2, 1);
    let w = load_weights(&init_weights_file(tmp.path())).unwrap();
    assert_eq!(w, init_weights(&ModelConfig::default(), 4).unwrap());
}

#[test]
fn training_logs_and_honours_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "d", "fixed", 3, 2);
    fs::write(tmp.path().join("run.cfg"), "# small run\nsteps = 5\nbatch_size = 2\nvariant = unet_plain\ncrop_seconds = 0.25\n").unwrap();
    let o = cdunet(
        &["train", "--data", "d", "--heldout", "d", "--out", "w.bin", "--log", "log.jsonl", "--steps", "2",
          "--config", "run.cfg"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // The flag wins over the file's `steps = 5`.
    let log = fs::read_to_string(tmp.path().join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(stdout(&o).contains("held-out SI-SNRi"));
    let w = load_weights(&tmp.path().join("w.bin")).unwrap();
    assert_eq!(w.infer_config().unwrap().variant, ModelVariant::UnetPlain);
}

#[test]
fn enhance_produces_mono_of_equal_length() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "d", "fixed", 1, 1);
    init_weights_file(tmp.path());
    stereo_file(tmp.path(), "in.wav", 12_345);
    let o = cdunet(&["enhance", "--in", "in.wav", "--angle", "60", "--weights", "w.bin", "--out", "out.wav"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("real-time factor"));
    let out = read_wav(tmp.path().join("out.wav")).unwrap();
    assert_eq!(out.num_channels(), 1);
    assert_eq!(out.len(), 12_345);
}

#[test]
fn enhance_rejects_bad_requests() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "d", "fixed", 1, 1);
    init_weights_file(tmp.path());
    stereo_file(tmp.path(), "in.wav", 4000);
    write_mono(tmp.path().join("mono.wav"), &Waveform::zeros(4000, 16_000), WavFormat::Pcm16).unwrap();

    let o = cdunet(&["enhance", "--in", "in.wav", "--angle", "200", "--weights", "w.bin", "--out", "o.wav"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("200"));

    let o = cdunet(&["enhance", "--in", "in.wav", "--angle", "90", "--width", "-3", "--weights", "w.bin", "--out", "o.wav"], tmp.path());
    assert_eq!(code(&o), 2);

    let o = cdunet(&["enhance", "--in", "mono.wav", "--angle", "90", "--weights", "w.bin", "--out", "o.wav"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("2-channel"), "{}", stderr(&o));

    let o = cdunet(&["enhance", "--in", "in.wav", "--angle", "90", "--weights", "missing.bin", "--out", "o.wav"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.bin"));
    assert!(!tmp.path().join("o.wav").exists());
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["simulate", "--count", "3", "--out", "x"],
        &["simulate", "--kind", "diagonal", "--count", "3", "--out", "x"],
        &["train", "--data", "d", "--out", "w", "--steps", "many"],
        &["eval", "--sweep", "sideways", "--identity", "--out", "x.csv"],
        &["beamform", "--method", "mvdr", "--angle", "10", "--in", "a", "--out", "b"],
        &["beamform", "--method", "das", "--angle", "181", "--in", "a", "--out", "b"],
    ] {
        let o = cdunet(args, tmp.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
    assert_eq!(code(&cdunet(&["--help"], tmp.path())), 0);
}

#[test]
fn eval_interference_sweep_has_thirteen_angle_columns() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "d", "fixed", 1, 1);
    init_weights_file(tmp.path());
    let run = |out: &str| {
        let o = cdunet(
            &["eval", "--weights", "w.bin", "--sweep", "interference", "--out", out, "--scenes", "1", "--snr", "0",
              "--clip-seconds", "0.5"],
            tmp.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read_to_string(tmp.path().join(out)).unwrap()
    };
    let csv = run("a.csv");
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 14);
    assert_eq!(&header[1..], ["0", "15", "30", "45", "60", "75", "90", "105", "120", "135", "150", "165", "180"]);
    assert_eq!(csv, run("b.csv"));
}

#[test]
fn eval_width_and_identity() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "d", "fixed", 1, 1);
    init_weights_file(tmp.path());
    let o = cdunet(
        &["eval", "--weights", "w.bin", "--sweep", "width", "--widths", "3,60", "--out", "w.csv", "--scenes", "1",
          "--snr", "0", "--clip-seconds", "0.5"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("w.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let o = cdunet(
        &["eval", "--identity", "--sweep", "target", "--out", "i.csv", "--scenes", "1", "--snr", "0",
          "--clip-seconds", "0.5"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = cdunet::train::ResultsTable::read_csv(&tmp.path().join("i.csv")).unwrap();
    assert_eq!(t.columns, ["0", "30", "60", "90"]);
    assert!(t.rows[0].values.iter().all(|v| v.abs() < 0.1));
}

#[test]
fn gradcheck_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cdunet(&["gradcheck"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    for layer in ["conv2d", "conv_transpose2d", "lstm", "cbam_channel_gate", "cbam_spatial_gate", "dprnn_bottleneck", "combined_loss"] {
        assert!(out.lines().any(|l| l.starts_with(layer) && l.ends_with("ok")), "{layer} missing in\n{out}");
    }
}

#[test]
fn beamform_both_methods() {
    let tmp = tempfile::tempdir().unwrap();
    stereo_file(tmp.path(), "in.wav", 5000);
    for m in ["das", "gsc"] {
        let o = cdunet(&["beamform", "--method", m, "--angle", "30", "--in", "in.wav", "--out", "b.wav"], tmp.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let b = read_wav(tmp.path().join("b.wav")).unwrap();
        assert_eq!((b.num_channels(), b.len()), (1, 5000));
    }
    let o = cdunet(&["beamform", "--method", "das", "--angle", "30", "--in", "absent.wav", "--out", "b.wav"], tmp.path());
    assert_eq!(code(&o), 1);
}
