use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn jdfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdfd")).args(args).output().expect("run jdfd")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Workspace {
    _dir: TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    /// Small defaults, with `overrides` replacing or adding keys.
    fn new(overrides: &[(&str, &str)]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("run.cfg");
        let (data, out) = (root.join("data").display().to_string(), root.join("out").display().to_string());
        let mut keys: Vec<(&str, &str)> = vec![
            ("image_size", "16"),
            ("latent_dim", "8"),
            ("n_train", "12"),
            ("n_test", "8"),
            ("epochs", "2"),
            ("data_dir", &data),
            ("out_dir", &out),
        ];
        for &(k, v) in overrides {
            match keys.iter_mut().find(|(key, _)| *key == k) {
                Some(slot) => slot.1 = v,
                None => keys.push((k, v)),
            }
        }
        let text: String = keys.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        fs::write(&config, text).unwrap();
        Workspace { _dir: dir, root, config }
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut all = vec!["--config", self.config.to_str().unwrap()];
        all.extend_from_slice(args);
        jdfd(&all)
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
        stdout(&o)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.root.join("out").join(name)
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn gen_data_is_idempotent() {
    let ws = Workspace::new(&[]);
    ws.ok(&["gen-data"]);
    let first = fs::read(ws.root.join("data/U/train/000000.ppm")).unwrap();
    let manifest = read(&ws.root.join("data/C/test.tsv"));
    ws.ok(&["gen-data"]);
    assert_eq!(fs::read(ws.root.join("data/U/train/000000.ppm")).unwrap(), first);
    assert_eq!(read(&ws.root.join("data/C/test.tsv")), manifest);
    assert_eq!(manifest.lines().count(), 8);
    for fam in ["U", "F", "C"] {
        assert_eq!(fs::read_dir(ws.root.join(format!("data/{fam}/train"))).unwrap().count(), 12);
    }
}

#[test]
fn train_logs_every_epoch_and_decays_learning_rates() {
    let ws = Workspace::new(&[("epochs", "6"), ("step_size", "2"), ("decay", "0.5")]);
    ws.ok(&["gen-data"]);
    ws.ok(&["train"]);
    let log = read(&ws.out("train_log.csv"));
    let rows: Vec<Vec<&str>> = log.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["epoch", "l_cro", "l_rec", "l_total", "lr_cae", "lr_cls"]);
    assert_eq!(rows.len(), 7);
    for (e, row) in rows[1..].iter().enumerate() {
        let k = 0.5f64.powi((e / 2) as i32);
        assert_eq!(row[0], (e + 1).to_string());
        assert_eq!(row[4].parse::<f64>().unwrap(), 0.005 * k);
        assert_eq!(row[5].parse::<f64>().unwrap(), 0.0004 * k);
    }
    assert!(ws.out("checkpoint.jdfd").exists());
    assert!(read(&ws.out("config.txt")).contains("epochs = 6"));
}

#[test]
fn eval_is_deterministic_and_covers_every_family() {
    let ws = Workspace::new(&[]);
    ws.ok(&["gen-data"]);
    ws.ok(&["train"]);
    ws.ok(&["eval"]);
    let report = read(&ws.out("report.csv"));
    let roc = read(&ws.out("roc_F.csv"));
    let scores = read(&ws.out("scores_C.csv"));
    assert_eq!(report.lines().count(), 4);
    assert!(roc.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
    assert_eq!(scores.lines().count(), 9);
    ws.ok(&["eval"]);
    assert_eq!(read(&ws.out("report.csv")), report);
    assert_eq!(read(&ws.out("roc_F.csv")), roc);
    assert_eq!(read(&ws.out("scores_C.csv")), scores);

    let manifest = ws.root.join("data/U/test.tsv");
    let out = ws.ok(&["eval", "--manifest", manifest.to_str().unwrap(), "--train-family", "X"]);
    assert!(out.contains("X -> U"));
    assert_eq!(read(&ws.out("report.csv")).lines().count(), 2);
}

#[test]
fn detector_checkpoint_scores_the_obvious_family() {
    let ws = Workspace::new(&[("image_size", "64"), ("latent_dim", "16"), ("n_test", "60")]);
    ws.ok(&["gen-data"]);
    ws.ok(&["detector"]);
    let ckpt = ws.out("detector.jdfd");
    let manifest = ws.root.join("data/U/test.tsv");
    ws.ok(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--manifest", manifest.to_str().unwrap()]);
    let report = read(&ws.out("report.csv"));
    let auc: f64 = report.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(auc > 0.9, "{report}");
}

#[test]
fn ablations_write_one_row_per_seed_variant_and_family() {
    let ws = Workspace::new(&[("epochs", "1"), ("ablation_seeds", "0,1"), ("ablation_ratios", "0,0.5"), ("train_family", "F")]);
    ws.ok(&["gen-data"]);
    ws.ok(&["ablate", "--study", "decoder"]);
    let rows = read(&ws.out("ablation_decoder.csv"));
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 3);
    assert!(rows.lines().skip(1).all(|l| l.starts_with("joint,") || l.starts_with("baseline,")));
    assert_eq!(read(&ws.out("ablation_decoder_means.csv")).lines().count(), 1 + 2 * 3);

    let out = ws.ok(&["ablate", "--study", "augmentation"]);
    assert!(out.contains("with classification gradient: 0"), "{out}");
    let rows = read(&ws.out("ablation_augmentation.csv"));
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 3);
    assert!(rows.lines().skip(1).any(|l| l.starts_with("0.5,")));
}

#[test]
fn gradcheck_passes_and_reports_injected_faults() {
    let o = jdfd(&["gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    for layer in ["conv2d", "conv_transpose2d", "batchnorm2d", "relu", "linear", "bilinear_resize", "joint_loss"] {
        assert!(table.lines().any(|l| l.starts_with(layer) && l.ends_with("ok")), "{layer}\n{table}");
    }

    let o = jdfd(&["gradcheck", "--inject-fault", "conv2d"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("conv2d"));
    assert!(stdout(&o).lines().any(|l| l.starts_with("conv2d ") && l.ends_with("FAIL")));

    let o = jdfd(&["gradcheck", "--inject-fault", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_configs_exit_with_code_2() {
    let ws = Workspace::new(&[("learning_rate", "3")]);
    let o = ws.run(&["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));

    let ws = Workspace::new(&[("beta1", "-1")]);
    assert_eq!(ws.run(&["train"]).status.code(), Some(2));
    let ws = Workspace::new(&[("epochs", "many")]);
    assert_eq!(ws.run(&["train"]).status.code(), Some(2));
    let ws = Workspace::new(&[("image_size", "20")]);
    assert_eq!(ws.run(&["detector"]).status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_with_code_3() {
    let ws = Workspace::new(&[]);
    let o = ws.run(&["train"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(jdfd(&["--config", "/nonexistent/jdfd.cfg", "train"]).status.code(), Some(3));
}
