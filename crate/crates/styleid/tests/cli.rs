//! Black-box tests of the installed binary: flag precedence, file outputs,
//! manifest replay, and agreement between the command-line metrics and the
//! library functions they wrap.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use styleid::dataset::{generate_sample_data, SamplePaths};
use styleid::fid_score;
use styleid::io::{load_png_fitted, write_extractor};
use styleid::perceptual::{toy_stage_specs, FeatureStack};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_styleid"));
    cmd.env_remove("STYLEID_SEED");
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary spawns")
}

fn assert_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_line<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines()
        .find(|l| l.starts_with(prefix))
        .unwrap_or_else(|| panic!("no line starting with {prefix:?} in:\n{text}"))
}

struct Fixture {
    dir: tempfile::TempDir,
    sample: SamplePaths,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("temp dir");
        let sample = generate_sample_data(dir.path().join("data"), 3, 4, 0).expect("sample tree");
        Fixture { dir, sample }
    }

    fn root(&self) -> &Path {
        self.dir.path()
    }

    fn refs_dir(&self) -> PathBuf {
        self.sample.refs[0].parent().expect("refs dir").to_path_buf()
    }

    fn backend(&self) -> String {
        format!("checkpoint:{}", self.sample.pretrained.display())
    }

    /// A short training run writing into `out` (relative to the fixture).
    fn quick_train(&self, out: &str, epochs: &str, steps: &str, extra: &[&str]) -> Output {
        let refs = self.refs_dir();
        let photo = &self.sample.photos[0];
        let backend = self.backend();
        let mut args = vec![
            "train",
            "--refs",
            refs.to_str().unwrap(),
            "--input",
            photo.to_str().unwrap(),
            "--out",
            out,
            "--backend",
            &backend,
            "--epochs",
            epochs,
            "--invert-steps",
            steps,
        ];
        args.extend_from_slice(extra);
        run_in(self.root(), &args)
    }
}

#[test]
fn train_writes_history_with_one_line_per_epoch() {
    let fx = Fixture::new();
    assert_code(&fx.quick_train("run", "6", "50", &["--seed", "3"]), 0);
    let history = std::fs::read_to_string(fx.root().join("run/history.tsv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines.len(), 6);
    for (i, line) in lines.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 4, "line {i}: {line:?}");
        assert_eq!(cols[0], i.to_string());
        for c in &cols[1..] {
            let v: f64 = c.parse().expect("numeric loss column");
            assert!(v.is_finite());
        }
    }
    for name in ["checkpoint.sidg", "stylized.png", "run.manifest"] {
        assert!(fx.root().join("run").join(name).is_file(), "{name} missing");
    }
}

#[test]
fn zero_epochs_returns_the_input_checkpoint_byte_for_byte() {
    let fx = Fixture::new();
    assert_code(&fx.quick_train("run0", "0", "10", &[]), 0);
    let input = std::fs::read(&fx.sample.pretrained).unwrap();
    let output = std::fs::read(fx.root().join("run0/checkpoint.sidg")).unwrap();
    assert_eq!(input, output);
    assert_eq!(
        std::fs::read_to_string(fx.root().join("run0/history.tsv")).unwrap(),
        ""
    );
}

#[test]
fn identical_runs_are_byte_identical_and_replay_verifies() {
    let fx = Fixture::new();
    assert_code(&fx.quick_train("a", "6", "50", &["--seed", "11"]), 0);
    assert_code(&fx.quick_train("b", "6", "50", &["--seed", "11"]), 0);
    let a = std::fs::read(fx.root().join("a/checkpoint.sidg")).unwrap();
    let b = std::fs::read(fx.root().join("b/checkpoint.sidg")).unwrap();
    assert_eq!(a, b);

    let out = run_in(fx.root(), &["replay", "--manifest", "a/run.manifest"]);
    assert_code(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("replay ok"), "unexpected output: {text}");

    // A different seed is a different run; the tampered manifest must fail.
    let manifest = fx.root().join("a/run.manifest");
    let tampered = std::fs::read_to_string(&manifest)
        .unwrap()
        .replace("seed = 11", "seed = 12");
    std::fs::write(&manifest, tampered).unwrap();
    let out = run_in(fx.root(), &["replay", "--manifest", "a/run.manifest"]);
    assert_code(&out, 3);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("replay mismatch"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn seed_env_variable_matches_the_flag_and_loses_to_it() {
    let fx = Fixture::new();
    let invert = |out: &str, seed_flag: Option<&str>, seed_env: Option<&str>| {
        let mut cmd = bin();
        cmd.current_dir(fx.root()).args([
            "invert",
            "--input",
            fx.sample.photos[0].to_str().unwrap(),
            "--out",
            out,
            "--invert-steps",
            "20",
            "--backend",
            &fx.backend(),
        ]);
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        if let Some(s) = seed_env {
            cmd.env("STYLEID_SEED", s);
        }
        assert_code(&cmd.output().expect("binary spawns"), 0);
        std::fs::read(fx.root().join(out).join("latent.sidl")).unwrap()
    };
    let flag = invert("f", Some("9"), None);
    let env = invert("e", None, Some("9"));
    let both = invert("fe", Some("9"), Some("4"));
    let other = invert("o", Some("4"), None);
    assert_eq!(flag, env, "env seed must act like the flag");
    assert_eq!(flag, both, "flag must beat the environment");
    assert_ne!(flag, other, "different seeds must differ");
}

#[test]
fn config_file_supplies_defaults_but_flags_win() {
    let fx = Fixture::new();
    std::fs::write(fx.root().join("run.cfg"), "epochs = 2\nseed = 6\n").unwrap();
    let refs = fx.refs_dir();
    let backend = fx.backend();

    // epochs comes from the file.
    let out = run_in(
        fx.root(),
        &[
            "train",
            "--refs",
            refs.to_str().unwrap(),
            "--input",
            fx.sample.photos[0].to_str().unwrap(),
            "--out",
            "cfg_run",
            "--backend",
            &backend,
            "--invert-steps",
            "20",
            "--config",
            "run.cfg",
        ],
    );
    assert_code(&out, 0);
    let history = std::fs::read_to_string(fx.root().join("cfg_run/history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 2);

    // ... unless the flag overrides it.
    let out = run_in(
        fx.root(),
        &[
            "train",
            "--refs",
            refs.to_str().unwrap(),
            "--input",
            fx.sample.photos[0].to_str().unwrap(),
            "--out",
            "cfg_run2",
            "--backend",
            &backend,
            "--invert-steps",
            "20",
            "--config",
            "run.cfg",
            "--epochs",
            "3",
        ],
    );
    assert_code(&out, 0);
    let history = std::fs::read_to_string(fx.root().join("cfg_run2/history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    // Unknown keys are usage errors.
    std::fs::write(fx.root().join("bad.cfg"), "epochz = 2\n").unwrap();
    let out = run_in(
        fx.root(),
        &[
            "train",
            "--refs",
            refs.to_str().unwrap(),
            "--input",
            fx.sample.photos[0].to_str().unwrap(),
            "--out",
            "x",
            "--config",
            "bad.cfg",
        ],
    );
    assert_code(&out, 2);
}

#[test]
fn eval_of_a_directory_against_itself_is_perfect() {
    let fx = Fixture::new();
    let photos = fx.sample.photos[0].parent().unwrap();
    let out = run_in(
        fx.root(),
        &[
            "eval",
            "--generated",
            photos.to_str().unwrap(),
            "--reference",
            photos.to_str().unwrap(),
        ],
    );
    assert_code(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    let fid: f64 = stdout_line(&text, "fid = ")["fid = ".len()..].parse().unwrap();
    assert!(fid.abs() <= 1e-6, "self-FID {fid} is not ~0");
    assert!(
        stdout_line(&text, "ssim = ").starts_with("ssim = 1.000000"),
        "self-SSIM is not exactly 1: {text}"
    );
}

#[test]
fn eval_with_an_external_extractor_matches_the_library() {
    let fx = Fixture::new();
    let photos_dir = fx.sample.photos[0].parent().unwrap().to_path_buf();
    let refs_dir = fx.refs_dir();

    // Export a seeded stack into the checkpoint container and hand it back
    // as a file: the command-line score must agree with the library score
    // to print precision. The stack is deliberately smaller than the
    // images so its shape must win.
    let stack = FeatureStack::toy(16, 16, 99).unwrap();
    let weights_path = fx.root().join("extractor.sidg");
    write_extractor(&weights_path, &stack).unwrap();

    let out = run_in(
        fx.root(),
        &[
            "eval",
            "--generated",
            photos_dir.to_str().unwrap(),
            "--reference",
            refs_dir.to_str().unwrap(),
            "--extractor",
            weights_path.to_str().unwrap(),
        ],
    );
    assert_code(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("extractor: external-conv3"), "wrong stack: {text}");
    assert!(text.contains("at 16x16"), "extractor size ignored: {text}");
    let cli_fid: f64 = stdout_line(&text, "fid = ")["fid = ".len()..].parse().unwrap();

    // Library route: same fitted loads, same weights, but through
    // `from_flat_weights` (f32 container quantization applies to both).
    let load_dir = |dir: &Path| -> Vec<styleid::Image> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "png"))
            .collect();
        paths.sort();
        paths.iter().map(|p| load_png_fitted(p, 16, 16).unwrap()).collect()
    };
    let quantized: Vec<f64> =
        stack.flat_weights().iter().map(|&v| v as f32 as f64).collect();
    let lib_stack =
        FeatureStack::from_flat_weights((16, 16, 3), &toy_stage_specs(), &quantized).unwrap();
    let lib_fid = fid_score(&load_dir(&photos_dir), &load_dir(&refs_dir), &lib_stack).unwrap();
    assert!(
        (cli_fid - lib_fid).abs() < 5e-7,
        "cli fid {cli_fid} vs library fid {lib_fid}"
    );

    // A well-formed container holding a different architecture (here: a
    // generator checkpoint) is a usage error, not an I/O error.
    let out = run_in(
        fx.root(),
        &[
            "eval",
            "--generated",
            photos_dir.to_str().unwrap(),
            "--reference",
            refs_dir.to_str().unwrap(),
            "--extractor",
            fx.sample.pretrained.to_str().unwrap(),
        ],
    );
    assert_code(&out, 2);
}

#[test]
fn sweep_writes_a_full_grid_and_replays() {
    let fx = Fixture::new();
    let refs = fx.refs_dir();
    let photos = fx.sample.photos[0].parent().unwrap().to_path_buf();
    let backend = fx.backend();
    let args = [
        "sweep",
        "--refs",
        refs.to_str().unwrap(),
        "--input",
        fx.sample.photos[0].to_str().unwrap(),
        "--photos",
        photos.to_str().unwrap(),
        "--out",
        "sw",
        "--backend",
        &backend,
        "--lambdas",
        "0.001,0.002",
        "--ref-counts",
        "1,2",
        "--epochs",
        "5",
        "--invert-steps",
        "40",
        "--jobs",
        "2",
    ];
    assert_code(&run_in(fx.root(), &args), 0);

    let tsv = std::fs::read_to_string(fx.root().join("sw/sweep.tsv")).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 4, "one row per grid point:\n{tsv}");
    for line in &lines {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 6, "lambda, count, ref, feature, fid, dispersion");
        // Every numeric column of this grid is populated: the battery has 2
        // runs and there are 4 subjects, so fid and dispersion both exist.
        for c in cols {
            assert_ne!(c, "-", "unexpected empty cell in {line:?}");
        }
    }
    assert!(fx.root().join("sw/montage.png").is_file());

    let out = run_in(fx.root(), &["replay", "--manifest", "sw/run.manifest"]);
    assert_code(&out, 0);
}

#[test]
fn corrupt_containers_are_format_errors() {
    let fx = Fixture::new();
    std::fs::write(fx.root().join("bad.sidg"), b"SIDGX___garbage").unwrap();
    let out = run_in(
        fx.root(),
        &[
            "invert",
            "--input",
            fx.sample.photos[0].to_str().unwrap(),
            "--out",
            "x",
            "--backend",
            "checkpoint:bad.sidg",
            "--invert-steps",
            "5",
        ],
    );
    assert_code(&out, 3);

    // Not-a-PNG input is also exit 3, with the decode error named.
    std::fs::write(fx.root().join("not.png"), b"not a png").unwrap();
    let out = run_in(
        fx.root(),
        &["invert", "--input", "not.png", "--out", "x", "--invert-steps", "5"],
    );
    assert_code(&out, 3);
}

#[test]
fn stylize_pipeline_consumes_a_trained_checkpoint() {
    let fx = Fixture::new();
    assert_code(&fx.quick_train("trained", "6", "50", &["--seed", "2"]), 0);
    let out = run_in(
        fx.root(),
        &[
            "stylize",
            "--checkpoint",
            "trained/checkpoint.sidg",
            "--input",
            fx.sample.photos[1].to_str().unwrap(),
            "--out",
            "styl",
            "--backend",
            &fx.backend(),
            "--invert-steps",
            "40",
        ],
    );
    assert_code(&out, 0);
    assert!(fx.root().join("styl/stylized.png").is_file());

    let out = run_in(fx.root(), &["replay", "--manifest", "styl/run.manifest"]);
    assert_code(&out, 0);
}
