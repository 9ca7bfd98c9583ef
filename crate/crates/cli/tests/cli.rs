use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use owlkit::store::{load_embeddings, save_embeddings, EmbeddingSet, Manifest, Role};
use owlkit::synth::{generate, ScenarioSpec, SessionSpec};
use tempfile::TempDir;

fn owlkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owlkit"))
        .args(args)
        .env("OWLKIT_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = owlkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = owlkit(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_scenario(dir: &Path, sessions: Vec<SessionSpec>) -> PathBuf {
    let spec = ScenarioSpec {
        sessions,
        ..ScenarioSpec::default()
    };
    generate(&spec).unwrap().write(dir).unwrap()
}

fn session(novel: usize) -> SessionSpec {
    SessionSpec {
        novel_classes: novel,
        known_fraction: 0.5,
        samples_per_class: 60,
    }
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn fit_base_writes_registry_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let m = write_scenario(&tmp.path().join("data"), vec![session(2)]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["fit-base", "--manifest", s(&m), "--out", s(&a), "--seed", "3"]);
    ok(&["fit-base", "--manifest", s(&m), "--out", s(&b), "--seed", "3"]);
    assert_eq!(json(&a.join("registry.json"))["entries"].as_array().unwrap().len(), 5);
    assert_eq!(
        std::fs::read(a.join("classifier.npy")).unwrap(),
        std::fs::read(b.join("classifier.npy")).unwrap()
    );
}

#[test]
fn missing_manifest_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nowhere").join("manifest.json");
    let (c, err) = code(&["fit-base", "--manifest", s(&missing), "--out", s(tmp.path())]);
    assert_eq!(c, 3);
    assert!(err.contains(s(&missing)), "{err}");
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = TempDir::new().unwrap();
    let m = write_scenario(&tmp.path().join("data"), vec![]);
    let out = tmp.path().join("st");
    let cfg = config(tmp.path(), "[owl]\ntarget_tp = 0.9\n");
    let (c, err) = code(&["fit-base", "--manifest", s(&m), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(c, 2, "{err}");
    let cfg = config(tmp.path(), "[owl]\ntarget_tpr = 1.5\n");
    assert_eq!(code(&["fit-base", "--manifest", s(&m), "--config", s(&cfg), "--out", s(&out)]).0, 2);
    assert_eq!(code(&["fit-base", "--manifest", s(&m)]).0, 2);
    assert_eq!(code(&["no-such-command"]).0, 2);
}

#[test]
fn owl_run_appends_one_log_per_session() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "[scorer]\nmethod = \"energy\"\n");
    let m = write_scenario(&tmp.path().join("two"), vec![session(2), session(2)]);
    let st = tmp.path().join("st");
    ok(&["fit-base", "--manifest", s(&m), "--config", s(&cfg), "--out", s(&st)]);
    ok(&["owl-run", "--manifest", s(&m), "--config", s(&cfg), "--state", s(&st), "--sessions", "1"]);
    assert_eq!(json(&st.join("logs.json")).as_array().unwrap().len(), 2);
    ok(&["owl-run", "--manifest", s(&m), "--config", s(&cfg), "--state", s(&st)]);
    let logs = json(&st.join("logs.json"));
    assert_eq!(logs.as_array().unwrap().len(), 3);
    assert_eq!(json(&st.join("registry.json"))["entries"].as_array().unwrap().len(), 9);

    // nothing left to run
    ok(&["owl-run", "--manifest", s(&m), "--config", s(&cfg), "--state", s(&st)]);
    assert_eq!(json(&st.join("logs.json")), logs);

    let m0 = write_scenario(&tmp.path().join("zero"), vec![]);
    let st0 = tmp.path().join("st0");
    ok(&["fit-base", "--manifest", s(&m0), "--out", s(&st0)]);
    ok(&["owl-run", "--manifest", s(&m0), "--state", s(&st0)]);
    assert_eq!(json(&st0.join("logs.json")).as_array().unwrap().len(), 1);
}

#[test]
fn default_scenario_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let m = generate(&ScenarioSpec::default()).unwrap().write(&tmp.path().join("d")).unwrap();
    let cfg = config(tmp.path(), "[scorer]\nmethod = \"energy\"\n");
    let st = tmp.path().join("st");
    ok(&["fit-base", "--manifest", s(&m), "--config", s(&cfg), "--out", s(&st)]);
    ok(&["owl-run", "--manifest", s(&m), "--config", s(&cfg), "--state", s(&st)]);
    let logs = json(&st.join("logs.json"));
    let last = &logs.as_array().unwrap()[1];
    assert_eq!(last["discovered_k"], 3);
    assert!(last["session_acc"].as_f64().unwrap() >= 0.95);

    let rep = tmp.path().join("rep");
    ok(&["report", "--state", s(&st), "--out", s(&rep)]);
    let rows = csv_rows(&std::fs::read_to_string(rep.join("sessions.csv")).unwrap());
    assert_eq!(rows.len(), 1 + 2);
    assert_eq!(rows[0][0], "session");
    assert_eq!(rows[2][3], "3");
    let plot = json(&rep.join("accuracy_curve.json"));
    assert_eq!(plot["x"], serde_json::json!([0, 1]));
    assert_eq!(plot["avg_acc"].as_array().unwrap().len(), 2);
}

fn ood_fixture(tmp: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf, PathBuf) {
    let m = write_scenario(&tmp.join("d"), vec![session(3)]);
    let st = tmp.join("st");
    ok(&["fit-base", "--manifest", s(&m), "--out", s(&st)]);
    let man = Manifest::load(&m).unwrap();
    let val = man.load_set(0, Role::BaseVal).unwrap();
    let id = tmp.join("id.npy");
    save_embeddings(&val.unlabeled(), &id, None).unwrap();

    let n = val.len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
    let shuffled = tmp.join("shuffled.npy");
    save_embeddings(&val.select(&perm).unlabeled(), &shuffled, None).unwrap();

    let session = man.load_set(1, Role::SessionTrain).unwrap();
    let labels = session.labels().unwrap();
    let novel: Vec<usize> = (0..session.len()).filter(|&i| labels[i] >= 5).collect();
    let far = tmp.join("far.npy");
    save_embeddings(&session.select(&novel).unlabeled(), &far, None).unwrap();
    (m, st, id, shuffled, far)
}

#[test]
fn ood_eval_reports_per_file_and_group_rows() {
    let tmp = TempDir::new().unwrap();
    let (m, st, id, shuffled, far) = ood_fixture(tmp.path());
    let out = ok(&["ood-eval", "--id", s(&id), "--ood", s(&shuffled), s(&far), "--state", s(&st), "--method", "msp"]);
    let rows = csv_rows(&out);
    assert_eq!(rows[0], vec!["group", "dataset", "auroc", "fpr95"]);
    assert_eq!(rows.len(), 3);
    let self_auroc: f64 = rows[1][2].parse().unwrap();
    assert!((self_auroc - 0.5).abs() <= 0.03, "{self_auroc}");
    let far_auroc: f64 = rows[2][2].parse().unwrap();
    assert!(far_auroc >= 0.99, "{far_auroc}");

    let cfg = config(
        tmp.path(),
        "[report]\ngroups = { near = [\"shuffled\"], far = [\"far\"], empty = [\"missing\"] }\n",
    );
    let out = ok(&[
        "ood-eval", "--id", s(&id), "--ood", s(&shuffled), s(&far), "--state", s(&st), "--method", "knn",
        "--manifest", s(&m), "--config", s(&cfg),
    ]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 5);
    assert_eq!((rows[1][0].as_str(), rows[2][0].as_str()), ("near", "far"));
    assert_eq!((rows[3][0].as_str(), rows[3][1].as_str()), ("far", "average"));
    assert_eq!(rows[3][2], rows[2][2]);
    assert_eq!((rows[4][0].as_str(), rows[4][1].as_str()), ("near", "average"));
}

#[test]
fn ood_eval_argument_errors() {
    let tmp = TempDir::new().unwrap();
    let (_, st, id, shuffled, _) = ood_fixture(tmp.path());
    let base = ["ood-eval", "--id", s(&id), "--ood", s(&shuffled), "--state", s(&st)];
    let (c, err) = code(&[&base[..], &["--method", "odin"]].concat());
    assert_eq!(c, 2);
    assert!(err.contains("odin"));
    // a different method needs data to fit it on
    assert_eq!(code(&[&base[..], &["--method", "mds"]].concat()).0, 2);
    let missing = tmp.path().join("missing.npy");
    let (c, _) = code(&["ood-eval", "--id", s(&missing), "--ood", s(&shuffled), "--state", s(&st), "--method", "msp"]);
    assert_eq!(c, 3);
}

#[test]
fn lwf_without_distillation_matches_finetune() {
    let tmp = TempDir::new().unwrap();
    let m = write_scenario(&tmp.path().join("d"), vec![session(2), session(2)]);
    let run = |text: &str, name: &str| {
        let cfg = tmp.path().join(name);
        std::fs::write(&cfg, text).unwrap();
        ok(&["cil-run", "--manifest", s(&m), "--config", s(&cfg), "--seed", "4"])
    };
    let ft = run("[cil]\nstrategy = \"finetune\"\nepochs = 5\n", "ft.toml");
    let lwf = run("[cil]\nstrategy = \"lwf\"\nlambda_lwf = 0.0\nepochs = 5\n", "lwf.toml");
    assert_eq!(ft, lwf);
    let rows = csv_rows(&ft);
    assert_eq!(rows[0], vec!["session", "classes", "accuracy", "avg"]);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][1], "9");
    let icarl = run("[cil]\nstrategy = \"icarl\"\nepochs = 5\n", "icarl.toml");
    assert!(csv_rows(&icarl)[3][2].parse::<f64>().unwrap() >= 0.95);
}

#[test]
fn fscil_run_emits_last_and_avg() {
    let tmp = TempDir::new().unwrap();
    let spec = ScenarioSpec {
        dim: 32,
        base_classes: 10,
        sessions: vec![
            SessionSpec {
                novel_classes: 10,
                known_fraction: 0.0,
                samples_per_class: 5,
            };
            2
        ],
        ..ScenarioSpec::default()
    };
    let m = generate(&spec).unwrap().write(tmp.path()).unwrap();
    let out = ok(&["fscil-run", "--manifest", s(&m), "--shots", "5"]);
    let rows = csv_rows(&out);
    assert_eq!(rows[0], vec!["dataset", "way", "shot", "sessions", "last", "avg"]);
    assert_eq!(&rows[1][..4], &["synth", "10", "5", "3"]);
    assert!(rows[1][4].parse::<f64>().unwrap() >= 0.95);
    assert_eq!(code(&["fscil-run", "--manifest", s(&m), "--shots", "6"]).0, 3);
}

#[test]
fn ncd_eval_scores_discovered_clusters() {
    let tmp = TempDir::new().unwrap();
    let m = write_scenario(&tmp.path().join("d"), vec![]);
    let man = Manifest::load(&m).unwrap();
    let e = man.entry(0, Role::BaseTrain).unwrap();
    let (f, l) = (man.resolve(&e.feature_path), man.resolve(e.label_path.as_ref().unwrap()));
    let out = ok(&["ncd-eval", "--features", s(&f), "--labels", s(&l)]);
    let rows = csv_rows(&out);
    assert_eq!(rows[0], vec!["k", "cluster_acc", "nmi", "purity"]);
    assert_eq!(rows[1], vec!["5", "1.000000", "1.000000", "1.000000"]);
    let out = ok(&["ncd-eval", "--features", s(&f), "--labels", s(&l), "--k", "2"]);
    assert_eq!(csv_rows(&out)[1][0], "2");
    let (c, _) = code(&["ncd-eval", "--features", s(&f), "--labels", s(&f)]);
    assert_eq!(c, 3);
}

#[test]
fn synth_command_matches_library_generation() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.toml");
    std::fs::write(&spec, "dim = 8\nbase_classes = 3\n[[sessions]]\nnovel_classes = 1\nknown_fraction = 0.25\nsamples_per_class = 12\n").unwrap();
    let out = tmp.path().join("cli");
    ok(&["synth", "--spec", s(&spec), "--seed", "5", "--out", s(&out)]);
    let lib = generate(&ScenarioSpec {
        dim: 8,
        base_classes: 3,
        sessions: vec![SessionSpec {
            novel_classes: 1,
            known_fraction: 0.25,
            samples_per_class: 12,
        }],
        seed: 5,
        ..ScenarioSpec::default()
    })
    .unwrap();
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    let input: EmbeddingSet = m.load_set(1, Role::SessionTrain).unwrap();
    assert_eq!(input.features(), lib.sessions[0].train.features());
    assert_eq!(input.len(), 16);
    let e = m.entry(0, Role::BaseTrain).unwrap();
    let base = load_embeddings(&m.resolve(&e.feature_path), None).unwrap();
    assert_eq!(base.features(), lib.base_train.features());

    std::fs::write(&spec, "dims = 8\n").unwrap();
    assert_eq!(code(&["synth", "--spec", s(&spec), "--out", s(&out)]).0, 2);
}

#[test]
fn sweep_runs_each_seed_like_a_direct_run() {
    let tmp = TempDir::new().unwrap();
    let m = write_scenario(&tmp.path().join("d"), vec![session(2)]);
    let cfg = config(tmp.path(), "[scorer]\nmethod = \"energy\"\n[cil]\nepochs = 5\n");
    let out = tmp.path().join("sweep");
    ok(&["sweep", "--manifest", s(&m), "--config", s(&cfg), "--seeds", "1,2,3", "--jobs", "2", "--out", s(&out)]);
    let rows = csv_rows(&std::fs::read_to_string(out.join("sweep.csv")).unwrap());
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().skip(1).map(|r| r[0].as_str()).collect::<Vec<_>>(), ["1", "2", "3"]);
    assert!(rows.iter().skip(1).all(|r| r[1] == "2"));

    let direct = tmp.path().join("direct");
    ok(&["fit-base", "--manifest", s(&m), "--config", s(&cfg), "--out", s(&direct), "--seed", "2"]);
    ok(&["owl-run", "--manifest", s(&m), "--config", s(&cfg), "--state", s(&direct)]);
    assert_eq!(
        std::fs::read(direct.join("logs.json")).unwrap(),
        std::fs::read(out.join("seed-2").join("logs.json")).unwrap()
    );
    assert_eq!(code(&["sweep", "--manifest", s(&m), "--seeds", "1", "--jobs", "0", "--out", s(&out)]).0, 2);
}
