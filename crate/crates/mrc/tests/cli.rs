use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn mrc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mrc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    mrc(args).status.code().unwrap()
}

fn trailer<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines().find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('='))).unwrap_or_else(|| panic!("no {key}= in {out}"))
}

const SMALL: [&str; 6] = ["--set", "band_low_hz=8", "--set", "band_high_hz=32", "--set", "band_width_hz=6"];

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small datasets and a model trained on them, shared by every test.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let f = Fixture { dir: tempfile::tempdir().unwrap() };
        for (name, seed) in [("train.mrcd", "1"), ("test.mrcd", "2")] {
            ok(&["synth", "--trials", "40", "--channels", "8", "--samples", "875", "--seed", seed, "--out", s(&f.path(name))]);
        }
        let (data, model) = (f.path("train.mrcd"), f.path("model.mrcm"));
        let mut args = vec!["train", s(&data), "-o", s(&model), "--threads", "1", "--set", "svm_epochs=100"];
        args.extend(SMALL);
        ok(&args);
        f
    })
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&[]), 64);
    assert_eq!(code(&["no-such-command"]), 64);
    assert_eq!(code(&["bench", "--reps", "0"]), 64);
    assert_eq!(code(&["--mode", "half", "design-filters"]), 64);
    assert_eq!(code(&["--set", "bogus=1", "design-filters"]), 64);
    assert_eq!(code(&["--set", "rho", "design-filters"]), 64);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
}

#[test]
fn file_errors_exit_2() {
    let f = fixture();
    let missing = f.path("missing.mrcd");
    assert_eq!(code(&["train", s(&missing), "-o", s(&f.path("x.mrcm"))]), 2);
    assert_eq!(code(&["infer", s(&f.path("test.mrcd")), s(&missing)]), 2);
    let junk = f.path("junk.mrcm");
    std::fs::write(&junk, b"MRCM\x01").unwrap();
    let out = mrc(&["infer", s(&f.path("test.mrcd")), s(&junk)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset"));
}

#[test]
fn unlabeled_eval_and_degenerate_train_exit_3() {
    let f = fixture();
    let unlabeled = f.path("unlabeled.mrcd");
    let mut trials = mrc::dataset::read(&f.path("test.mrcd")).unwrap();
    for t in &mut trials {
        t.label = None;
    }
    mrc::dataset::write(&unlabeled, &trials).unwrap();
    assert_eq!(code(&["eval", s(&unlabeled), s(&f.path("model.mrcm"))]), 3);
    assert_eq!(code(&["train", s(&unlabeled), "-o", s(&f.path("u.mrcm"))]), 3);

    let one_class = f.path("one_class.mrcd");
    for t in &mut trials {
        t.label = Some(0);
    }
    mrc::dataset::write(&one_class, &trials).unwrap();
    assert_eq!(code(&["train", s(&one_class), "-o", s(&f.path("o.mrcm"))]), 3);
}

#[test]
fn training_is_byte_identical_across_thread_counts() {
    let f = fixture();
    let base = std::fs::read(f.path("model.mrcm")).unwrap();
    for threads in ["2", "5"] {
        let out = f.path(&format!("model_{threads}.mrcm"));
        let data = f.path("train.mrcd");
        let mut args = vec!["train", s(&data), "-o", s(&out), "--threads", threads];
        args.extend(SMALL);
        args.extend(["--set", "svm_epochs=100"]);
        ok(&args);
        assert_eq!(std::fs::read(&out).unwrap(), base, "threads {threads}");
    }
}

#[test]
fn infer_prints_one_line_per_trial() {
    let f = fixture();
    for mode in ["float", "quant"] {
        let out = ok(&["infer", "--mode", mode, s(&f.path("test.mrcd")), s(&f.path("model.mrcm"))]);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 40);
        for (i, l) in lines.iter().enumerate() {
            let fields: Vec<&str> = l.split(',').collect();
            assert_eq!(fields.len(), 6, "{l}");
            assert_eq!(fields[0], i.to_string());
            let class: usize = fields[1].parse().unwrap();
            let scores: Vec<f64> = fields[2..].iter().map(|x| x.parse().unwrap()).collect();
            let best = (0..4).fold(0, |b, k| if scores[k] > scores[b] { k } else { b });
            assert_eq!(class, best);
        }
    }
}

#[test]
fn infer_output_is_independent_of_threads() {
    let f = fixture();
    for mode in ["float", "quant"] {
        let a = ok(&["infer", "--mode", mode, "--threads", "1", s(&f.path("test.mrcd")), s(&f.path("model.mrcm"))]);
        let b = ok(&["infer", "--mode", mode, "--threads", "4", s(&f.path("test.mrcd")), s(&f.path("model.mrcm"))]);
        assert_eq!(a, b);
    }
}

#[test]
fn eval_ends_with_accuracy() {
    let f = fixture();
    let out = ok(&["eval", "--mode", "quant", "--no-timing", s(&f.path("test.mrcd")), s(&f.path("model.mrcm"))]);
    let last = out.lines().last().unwrap();
    let acc: f64 = last.strip_prefix("accuracy=").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(last.len(), "accuracy=0.0000".len());
    assert_eq!(trailer(&out, "trials"), "40");
    assert!(!out.contains("eval_seconds"));
}

#[test]
fn compare_reports_agreement() {
    let f = fixture();
    let out = ok(&["compare", s(&f.path("test.mrcd")), s(&f.path("model.mrcm"))]);
    let agree: f64 = trailer(&out, "agreement").parse().unwrap();
    assert!((0.0..=1.0).contains(&agree));
    let same = ok(&["compare", "--right", "float", s(&f.path("test.mrcd")), s(&f.path("model.mrcm"))]);
    assert_eq!(trailer(&same, "agreement"), "1.0000");
    assert_eq!(trailer(&same, "feature_rel_err_max"), "0.000000");
}

#[test]
fn bench_reports_default_iir_macs() {
    let out = ok(&["bench", "--reps", "1", "--no-timing"]);
    assert_eq!(trailer(&out, "iir_macs"), "3465000");
    assert!(!out.contains("median_ms"));
}

#[test]
fn design_filters_lists_every_section() {
    let out = ok(&["design-filters"]);
    assert_eq!(trailer(&out, "bands"), "18");
    assert_eq!(trailer(&out, "sections"), "36");
    assert_eq!(out.lines().count(), 1 + 36 + 2);
}

#[test]
fn synth_is_seeded() {
    let f = fixture();
    let a = f.path("s_a.mrcd");
    let b = f.path("s_b.mrcd");
    let c = f.path("s_c.mrcd");
    ok(&["synth", "--trials", "4", "--channels", "4", "--samples", "100", "--seed", "7", "--out", s(&a)]);
    ok(&["synth", "--trials", "4", "--channels", "4", "--samples", "100", "--seed", "7", "--out", s(&b)]);
    ok(&["synth", "--trials", "4", "--channels", "4", "--samples", "100", "--seed", "8", "--out", s(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn config_file_is_applied() {
    let f = fixture();
    let cfg = f.path("narrow.cfg");
    std::fs::write(&cfg, "# two bands\nband_low_hz = 8\nband_high_hz = 16\nband_width_hz = 4\n").unwrap();
    let out = ok(&["design-filters", "--config", s(&cfg)]);
    assert_eq!(trailer(&out, "bands"), "2");
    std::fs::write(&cfg, "band_low_hz = 8\nnonsense\n").unwrap();
    let out = mrc(&["design-filters", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config line 2"));
}

#[test]
fn import_csv_writes_a_dataset() {
    let f = fixture();
    let dir = f.path("csv");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("t0.csv"), "C3,C4\n1.0,2.0\n3.0,4.0\n5.0,6.0\n").unwrap();
    std::fs::write(dir.join("manifest.txt"), "sampling_rate_hz,250\nt0.csv,2\n").unwrap();
    let out_path = f.path("csv.mrcd");
    ok(&["import-csv", s(&dir.join("manifest.txt")), "--out", s(&out_path)]);
    let trials = mrc::dataset::read(&out_path).unwrap();
    assert_eq!(trials.len(), 1);
    assert_eq!((trials[0].n_channels(), trials[0].n_samples(), trials[0].label), (2, 3, Some(2)));
    assert_eq!(trials[0].channel(1), &[2.0, 4.0, 6.0]);
}
