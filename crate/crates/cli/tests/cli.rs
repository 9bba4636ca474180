use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn kge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn kge")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct Data {
    dir: TempDir,
}

impl Data {
    /// 20 entities, 3 relations; every line is `e{i}\tr{k}\te{j}`.
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let mut train = String::new();
        let mut held = Vec::new();
        for i in 0..20usize {
            for k in 0..3usize {
                let j = (i * (k + 2) + k + 1) % 20;
                let line = format!("e{i}\tr{k}\te{j}\n");
                if (i + k) % 7 == 0 {
                    held.push(line);
                } else {
                    train.push_str(&line);
                }
            }
        }
        fs::write(dir.path().join("train.tsv"), train).unwrap();
        let (valid, test) = held.split_at(held.len() / 2);
        fs::write(dir.path().join("valid.tsv"), valid.concat()).unwrap();
        fs::write(dir.path().join("test.tsv"), test.concat()).unwrap();
        Data { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn split_args(&self) -> Vec<String> {
        vec![
            "--train".into(),
            self.p("train.tsv"),
            "--valid".into(),
            self.p("valid.tsv"),
            "--test".into(),
            self.p("test.tsv"),
        ]
    }

    fn run(&self, verb: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec![verb.into()];
        args.extend(self.split_args());
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        kge(&refs)
    }

    fn train(&self, model: &str, ckpt: &str, extra: &[&str]) -> Output {
        let ckpt = self.p(ckpt);
        let mut args = vec![
            "--model",
            model,
            "--dim-e",
            "6",
            "--dim-r",
            "6",
            "--bases",
            "2",
            "--epochs",
            "3",
            "--pretrain-epochs",
            "2",
            "--batch-size",
            "16",
            "--checkpoint",
            &ckpt,
        ];
        args.extend_from_slice(extra);
        self.run("train", &args)
    }
}

fn assert_ok(out: &Output) {
    assert_eq!(
        code(out),
        0,
        "stdout: {}\nstderr: {}",
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn prepare_reports_split_sizes() {
    let d = Data::new();
    let out = d.run("prepare", &["--out", &d.p("stats.json")]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("entities\t20"), "{text}");
    assert!(text.contains("relations\t3"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path("stats.json")).unwrap()).unwrap();
    assert!(json["stats"].is_object());
}

#[test]
fn train_eval_export_flow() {
    let d = Data::new();
    let log = d.p("log.tsv");
    assert_ok(&d.train("transf", "m.ckpt", &["--log", &log]));
    let log_text = fs::read_to_string(&log).unwrap();
    let mut lines = log_text.lines();
    assert_eq!(
        lines.next(),
        Some("epoch\tmean_loss\tviolation_rate\twall_clock_seconds")
    );
    // two pretrain epochs followed by three TransF epochs
    assert_eq!(lines.count(), 5);

    let out = d.run(
        "eval",
        &["--checkpoint", &d.p("m.ckpt"), "--out", &d.p("report.json")],
    );
    assert_ok(&out);
    let text = stdout(&out);
    assert!(
        text.lines().any(|l| l.starts_with("filtered.hits@10")),
        "{text}"
    );
    assert!(text.lines().any(|l| l.starts_with("raw.mrr")), "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path("report.json")).unwrap()).unwrap();
    assert!(report["filtered"].is_object());

    assert_ok(&d.run(
        "export-relations",
        &["--checkpoint", &d.p("m.ckpt"), "--out", &d.p("rel.tsv")],
    ));
    let export = fs::read_to_string(d.path("rel.tsv")).unwrap();
    let rows: Vec<&str> = export.lines().collect();
    assert_eq!(rows.len(), 1 + 3);
    for row in &rows {
        // name + d_r + 2s
        assert_eq!(row.split('\t').count(), 1 + 6 + 2 * 2, "{row}");
    }

    assert_ok(&d.run(
        "export-relations",
        &[
            "--checkpoint",
            &d.p("m.ckpt"),
            "--out",
            &d.p("r.tsv"),
            "--translation-only",
        ],
    ));
    let export = fs::read_to_string(d.path("r.tsv")).unwrap();
    assert!(export.lines().all(|row| row.split('\t').count() == 7));
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let d = Data::new();
    assert_ok(&d.train("transr", "a.ckpt", &["--seed", "4"]));
    assert_ok(&d.train("transr", "b.ckpt", &["--seed", "4"]));
    assert_eq!(
        fs::read(d.path("a.ckpt")).unwrap(),
        fs::read(d.path("b.ckpt")).unwrap()
    );
}

#[test]
fn transf_from_transe_checkpoint() {
    let d = Data::new();
    assert_ok(&d.train("transe", "e.ckpt", &[]));
    let e = d.p("e.ckpt");
    assert_ok(&d.train("transf", "f.ckpt", &["--init", &e, "--as", "transf-init"]));
    assert_ok(&d.run("eval", &["--checkpoint", &d.p("f.ckpt")]));

    // transf-init needs a TransE source
    let f = d.p("f.ckpt");
    assert_eq!(
        code(&d.train("transf", "g.ckpt", &["--init", &f, "--as", "transf-init"])),
        1
    );
}

#[test]
fn vocabulary_mismatch_is_rejected_unless_allowed() {
    let d = Data::new();
    assert_ok(&d.train("transe", "m.ckpt", &[]));
    // same sizes, different names
    let renamed = fs::read_to_string(d.path("train.tsv"))
        .unwrap()
        .replace("r0", "q0");
    fs::write(d.path("train.tsv"), renamed).unwrap();
    for f in ["valid.tsv", "test.tsv"] {
        let t = fs::read_to_string(d.path(f)).unwrap().replace("r0", "q0");
        fs::write(d.path(f), t).unwrap();
    }
    let ckpt = d.p("m.ckpt");
    assert_eq!(code(&d.run("eval", &["--checkpoint", &ckpt])), 2);
    assert_ok(&d.run("eval", &["--checkpoint", &ckpt, "--allow-vocab-mismatch"]));
}

#[test]
fn params_prints_closed_forms() {
    let out = kge(&["params", "--entities", "14951", "--relations", "1345"]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("transe\t1629600"), "{text}");
    assert!(text.contains("transr\t15079600"), "{text}");
    assert!(text.contains("transf\t1743050"), "{text}");
}

#[test]
fn bench_without_timing() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("bench.tsv");
    let out = kge(&[
        "bench",
        "--entities",
        "40",
        "--relations",
        "4",
        "--triples",
        "200",
        "--dim-e",
        "8",
        "--bases",
        "1,3",
        "--no-timing",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let text = fs::read_to_string(&out_path).unwrap();
    assert_eq!(text, stdout(&out));
    // header + transe, transh, transr + two transf rows
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().skip(1).all(|l| l.ends_with("\t-")));
}

#[test]
fn exit_codes() {
    let d = Data::new();
    assert_eq!(code(&kge(&["train", "--no-such-flag"])), 1);
    assert_eq!(
        code(&d.train("transe", "m.ckpt", &["--batch-size", "0"])),
        1
    );

    let missing = kge(&["prepare", "--train", d.path("nope.tsv").to_str().unwrap()]);
    assert_eq!(code(&missing), 2);

    fs::write(d.path("bad.tsv"), "a\tb\n").unwrap();
    assert_eq!(code(&kge(&["prepare", "--train", &d.p("bad.tsv")])), 2);

    fs::write(d.path("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(
        code(&d.run("eval", &["--checkpoint", &d.p("junk.ckpt")])),
        2
    );

    assert_eq!(code(&d.train("transr", "m.ckpt", &["--lr", "1e300"])), 3);
    assert!(!Path::new(&d.p("m.ckpt")).exists());
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&kge(&["--help"])), 0);
    assert_eq!(code(&kge(&["train", "--help"])), 0);
}
