// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chipnet_core::container::{decode_cnw, encode_cnw};
use chipnet_core::pgm::write_pgm;
use chipnet_core::postprocess::{CellState, GridMapConfig};
use chipnet_core::train::synth::{synth_frame, SceneConfig};
use chipnet_core::{Cten, GridMap, Network, ProbMap, Tensor3, WeightFile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn chipnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chipnet")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    /// A synthetic road frame at the default full-size grid.
    fn frame(&self, name: &str) -> String {
        let cfg = SceneConfig { grid: Default::default(), azimuth_step: 0.17, ..SceneConfig::default() };
        let (_, cloud, _) = synth_frame(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        fs::write(self.path(name), cloud.to_kitti_bytes()).unwrap();
        self.s(name)
    }

    fn small_weights(&self, name: &str, channels: usize) -> String {
        let net = Network::<f32>::glorot(14, channels, 1, &mut ChaCha8Rng::seed_from_u64(2));
        fs::write(self.path(name), encode_cnw(&WeightFile::Float(net))).unwrap();
        self.s(name)
    }

    fn small_tensor(&self, name: &str, channels: usize) -> String {
        let t = Tensor3::from_fn(6, 9, channels, |r, c, k| ((r * 7 + c * 3 + k) % 11) as f32 - 5.0);
        fs::write(self.path(name), Cten::from_tensor(&t).to_bytes()).unwrap();
        self.s(name)
    }
}

#[test]
fn preprocess_writes_full_tensor() {
    let f = Fixture::new();
    let frame = f.frame("frame.bin");
    let o = chipnet(&["preprocess", "--input", &frame, "--output", &f.s("t.cten")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("point usage"));
    let t = Cten::from_bytes(&fs::read(f.path("t.cten")).unwrap()).unwrap();
    assert_eq!(t.dims, vec![64, 180, 14]);

    let o = chipnet(&["preprocess", "--input", &frame, "--output", &f.s("r.cten"), "--rotate", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(f.path("t.cten")).unwrap(), fs::read(f.path("r.cten")).unwrap());

    let o = chipnet(&["preprocess", "--input", &frame, "--output", &f.s("n.cten"), "--rotate", "-10"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn preprocess_error_codes() {
    let f = Fixture::new();
    fs::write(f.path("bad.bin"), [0u8; 17]).unwrap();
    assert_eq!(code(&chipnet(&["preprocess", "--input", &f.s("bad.bin"), "--output", &f.s("o")])), 3);
    assert_eq!(code(&chipnet(&["preprocess", "--input", &f.s("missing.bin"), "--output", &f.s("o")])), 2);
    assert_eq!(code(&chipnet(&["preprocess", "--output", &f.s("o")])), 1);
    assert_eq!(code(&chipnet(&["no-such-command"])), 1);
    fs::write(f.path("bad.csv"), "1,2,3,0.5\n1,2\n").unwrap();
    assert_eq!(code(&chipnet(&["preprocess", "--input", &f.s("bad.csv"), "--output", &f.s("o")])), 3);
    fs::write(f.path("bad.toml"), "threshold = 7.0\n").unwrap();
    let frame = f.frame("frame.bin");
    assert_eq!(code(&chipnet(&["preprocess", "--input", &frame, "--config", &f.s("bad.toml"), "--output", &f.s("o")])), 1);
}

#[test]
fn infer_modes_are_deterministic() {
    let f = Fixture::new();
    let w = f.small_weights("w.cnw", 4);
    let t = f.small_tensor("t.cten", 14);
    for mode in ["float", "fixed"] {
        let a = f.s(&format!("{mode}_a.cten"));
        let b = f.s(&format!("{mode}_b.cten"));
        assert_eq!(code(&chipnet(&["infer", "--tensor", &t, "--weights", &w, "--mode", mode, "--output", &a])), 0);
        assert_eq!(code(&chipnet(&["infer", "--tensor", &t, "--weights", &w, "--mode", mode, "--output", &b])), 0);
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let p = Cten::from_bytes(&fs::read(&a).unwrap()).unwrap().to_prob().unwrap();
        assert_eq!((p.rows(), p.cols()), (6, 9));
    }
    let wrong = f.small_tensor("wrong.cten", 13);
    assert_eq!(code(&chipnet(&["infer", "--tensor", &wrong, "--weights", &w, "--output", &f.s("o")])), 4);
    assert_eq!(code(&chipnet(&["infer", "--tensor", &t, "--weights", &f.s("none.cnw"), "--output", &f.s("o")])), 2);
}

#[test]
fn quantize_is_idempotent_and_validates_formats() {
    let f = Fixture::new();
    let w = f.small_weights("w.cnw", 4);
    let o = chipnet(&["quantize", "--weights", &w, "--bits", "18", "--frac", "14", "--output", &f.s("q1.cnw")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("max |error|"));
    assert!(decode_cnw(&fs::read(f.path("q1.cnw")).unwrap()).unwrap().is_fixed());
    let q1 = f.s("q1.cnw");
    assert_eq!(code(&chipnet(&["quantize", "--weights", &q1, "--output", &f.s("q2.cnw")])), 0);
    assert_eq!(fs::read(f.path("q1.cnw")).unwrap(), fs::read(f.path("q2.cnw")).unwrap());
    assert_eq!(code(&chipnet(&["quantize", "--weights", &w, "--bits", "1", "--output", &f.s("x")])), 1);
    assert_eq!(code(&chipnet(&["quantize", "--weights", &w, "--bits", "8", "--frac", "8", "--output", &f.s("x")])), 1);
}

#[test]
fn simulate_checks_bit_exactness_and_reports_cycles() {
    let f = Fixture::new();
    let w = f.small_weights("w.cnw", 4);
    let t = f.small_tensor("t.cten", 14);
    assert_eq!(code(&chipnet(&["quantize", "--weights", &w, "--output", &f.s("q.cnw")])), 0);
    let q = f.s("q.cnw");
    let o = chipnet(&[
        "simulate", "--tensor", &t, "--weights", &q, "--trace", &f.s("trace.csv"), "--json", &f.s("r.json"),
        "--output", &f.s("p.cten"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("bit-exact"));
    // (6+4)·(9+4) cycles per pass, 2 + 2 + 1 passes
    assert!(out.contains("cycles/pass     130"));
    assert!(out.contains("total cycles    650"));
    assert!(fs::read_to_string(f.path("trace.csv")).unwrap().starts_with("cycle,layer,pass,pixel_index\n"));
    assert!(fs::read_to_string(f.path("r.json")).unwrap().contains("\"total_cycles\": 650"));

    assert_eq!(code(&chipnet(&["infer", "--tensor", &t, "--weights", &q, "--mode", "fixed", "--output", &f.s("ref.cten")])), 0);
    assert_eq!(fs::read(f.path("p.cten")).unwrap(), fs::read(f.path("ref.cten")).unwrap());

    assert_eq!(code(&chipnet(&["simulate", "--tensor", &t, "--weights", &w])), 1);
}

#[test]
fn simulate_model_for_full_network() {
    let f = Fixture::new();
    assert_eq!(code(&chipnet(&["init", "--output", &f.s("full.cnw")])), 0);
    assert_eq!(code(&chipnet(&["quantize", "--weights", &f.s("full.cnw"), "--output", &f.s("fullq.cnw")])), 0);
    let t = Tensor3::<f32>::zeros(64, 180, 14);
    fs::write(f.path("t.cten"), Cten::from_tensor(&t).to_bytes()).unwrap();
    let run = |mhz: &str| {
        let o = chipnet(&["simulate", "--tensor", &f.s("t.cten"), "--weights", &f.s("fullq.cnw"), "--model-only", "--clock-mhz", mhz]);
        assert_eq!(code(&o), 0);
        stdout(&o)
    };
    let out = run("350");
    assert!(out.contains("cycles/pass     12512"), "{out}");
    assert!(out.contains("total cycles    4416736"));
    assert!(out.contains("12.6192 ms"));
    assert!(run("700").contains("6.3096 ms"));
}

fn full_tensor(f: &Fixture) -> String {
    let t = Tensor3::from_fn(64, 180, 14, |r, c, k| {
        let theta = -45.0 + 0.5 * (c as f32 + 0.5);
        let rho = 6.0 + 0.6 * r as f32;
        match k % 7 {
            0 => rho * theta.to_radians().cos(),
            1 => rho * theta.to_radians().sin(),
            2 => -1.7,
            3 => theta,
            5 => rho,
            _ => 0.1,
        }
    });
    fs::write(f.path("full.cten"), Cten::from_tensor(&t).to_bytes()).unwrap();
    f.s("full.cten")
}

#[test]
fn postprocess_outputs_map_and_polygon() {
    let f = Fixture::new();
    let t = full_tensor(&f);
    fs::write(f.path("zero.cten"), Cten::from_prob(&ProbMap::filled(64, 180, 0.0)).to_bytes()).unwrap();
    let o = chipnet(&["postprocess", "--prob", &f.s("zero.cten"), "--tensor", &t, "--map", &f.s("z.pgm"), "--polygon", &f.s("z.csv")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read(f.path("z.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n400 800\n255\n"));
    assert!(pgm[15..].iter().all(|&v| v == 0));

    fs::write(f.path("one.cten"), Cten::from_prob(&ProbMap::filled(64, 180, 1.0)).to_bytes()).unwrap();
    let o = chipnet(&["postprocess", "--prob", &f.s("one.cten"), "--tensor", &t, "--map", &f.s("o.pgm"), "--polygon", &f.s("o.csv")]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(f.path("o.csv")).unwrap();
    assert!(csv.starts_with("x_m,y_m\n"));
    assert!(csv.lines().count() > 100);
    let pgm = fs::read(f.path("o.pgm")).unwrap();
    assert!(pgm[15..].iter().filter(|&&v| v == 255).count() > 100_000);

    for thr in ["0", "1.5"] {
        let o = chipnet(&["postprocess", "--prob", &f.s("one.cten"), "--tensor", &t, "--map", &f.s("x.pgm"), "--thr", thr]);
        assert_eq!(code(&o), 1);
    }
}

fn write_map(path: &Path, map: &GridMap) {
    let (w, h, px) = map.to_image();
    fs::write(path, write_pgm(w, h, &px)).unwrap();
}

#[test]
fn eval_prints_metrics() {
    let f = Fixture::new();
    let mut map = GridMap::new(GridMapConfig::default());
    for ix in 100..300 {
        for iy in 50..350 {
            map.set(ix, iy, CellState::Drivable);
        }
    }
    write_map(&f.path("gt.pgm"), &map);
    let o = chipnet(&["eval", "--pred", &f.s("gt.pgm"), "--gt", &f.s("gt.pgm")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("f1=1.000000"));

    let mut care = GridMap::new(GridMapConfig::default());
    care.set(0, 0, CellState::Drivable);
    write_map(&f.path("dc.pgm"), &care);
    let o = chipnet(&["eval", "--pred", &f.s("gt.pgm"), "--gt", &f.s("gt.pgm"), "--dontcare", &f.s("dc.pgm")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains(&format!("tn {}", 320_000 - 60_000 - 1)));

    assert_eq!(code(&chipnet(&["eval", "--pred", &f.s("missing.pgm"), "--gt", &f.s("gt.pgm")])), 2);
}

#[test]
fn train_writes_loss_history() {
    let f = Fixture::new();
    let o = chipnet(&[
        "train", "--frames", "4", "--epochs", "2", "--quant-epochs", "1", "--channels", "4", "--blocks", "1",
        "--loss-csv", &f.s("loss.csv"), "--output", &f.s("w.cnw"), "--quantized-output", &f.s("q.cnw"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(f.path("loss.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,loss,f1");
    assert_eq!(lines.len(), 1 + 3);
    assert!(lines[3].starts_with("3,"));
    assert!(!decode_cnw(&fs::read(f.path("w.cnw")).unwrap()).unwrap().is_fixed());
    assert!(decode_cnw(&fs::read(f.path("q.cnw")).unwrap()).unwrap().is_fixed());
}

#[test]
fn stats_reports_scanner_rates() {
    let f = Fixture::new();
    let frame = f.frame("frame.bin");
    let o = chipnet(&["stats", "--input", &frame]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("10.0 frames/s"));
    assert!(out.contains("133000 points/frame"));
    assert!(out.contains("of RoI points"));
}

#[test]
fn model_only_without_inputs_uses_full_network() {
    let o = chipnet(&["simulate", "--model-only"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("cycles/pass     12512"), "{out}");
    assert!(out.contains("total cycles    4416736"), "{out}");
}
