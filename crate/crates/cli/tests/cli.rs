//! End-to-end tests of the `dasrate` binary and the runner library.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dasrate::mrt::{asym_rate_mrt_ca, rate_mrt_ca, AsymptoticParams};
use dasrate::zfbf::avg_rate_zfbf_ca;
use dasrate::{Method, QuadratureSpec};
use dasrate_cli::experiments::round_value;
use dasrate_cli::output::{csv_text, parse_csv};
use dasrate_cli::{run, ConfigLayer, ExperimentConfig, Row};
use proptest::prelude::*;
use tempfile::TempDir;

const SMALL_PLAN: [&str; 6] = [
    "--fading-draws",
    "3",
    "--user-realizations",
    "2",
    "--antenna-realizations",
    "2",
];

fn dasrate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dasrate"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<Row> {
    parse_csv(&fs::read_to_string(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn scenario_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = dasrate(
        dir.path(),
        &["run", "scenario", "--layout", "ca", "--scheme", "mrt", "--L", "100", "--K", "50"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        listing(dir.path()),
        ["scenario_meta.json", "scenario_mrt_ca_analytic.csv"]
    );
    let got = rows(&dir.path().join("scenario_mrt_ca_analytic.csv"));
    let expected = rate_mrt_ca(100, 50, &QuadratureSpec::default()).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].x, 100.0);
    assert_eq!(got[0].value, round_value(expected.value));
    assert_eq!(got[0].method, Method::ClosedForm);
    assert_eq!((got[0].stderr, got[0].n_samples, got[0].seed), (None, 0, None));

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("scenario_meta.json")).unwrap()).unwrap();
    assert!(meta["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["config"]["grid"]["antennas"][0], 100);
    assert_eq!(meta["config"]["plan"]["fading_draws"], 100);
    assert_eq!(meta["versions"]["dasrate"], dasrate::VERSION);
}

#[test]
fn csv_round_trips_in_memory_results() {
    let dir = TempDir::new().unwrap();
    let args = [
        "run", "sweep", "--L", "6,8", "--K", "3", "--seed", "4", "--fading-draws", "3",
        "--user-realizations", "2", "--antenna-realizations", "2",
    ];
    let out = dasrate(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let mut layer = ConfigLayer::from_toml(
        "experiment = \"sweep\"\n[grid]\nantennas = [6, 8]\nusers = [3]\n\
         [plan]\nmaster_seed = 4\nfading_draws = 3\nuser_realizations = 2\nantenna_realizations = 2\n",
    )
    .unwrap();
    layer.output.dir = Some(dir.path().to_path_buf());
    let config = ExperimentConfig::resolve(layer).unwrap();
    let outcome = run(&config, |_| Ok(())).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    assert_eq!(outcome.curves.len(), 4);
    for curve in &outcome.curves {
        let path = dir.path().join(format!("sweep_{}.csv", curve.id));
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(parse_csv(&text).unwrap(), curve.rows, "{}", curve.id);
        assert_eq!(text, csv_text(&curve.rows));
        assert!(curve.rows.iter().all(|r| r.seed == Some(4) && r.stderr.is_some()));
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut args = vec!["run", "figure8", "--L", "6,10", "--K", "4", "--seed", "11"];
    args.extend(SMALL_PLAN);
    let out_a = dasrate(a.path(), &args);
    args.extend(["--workers", "2"]);
    let out_b = dasrate(b.path(), &args);
    assert_eq!(out_a.status.code(), Some(0), "{}", stderr(&out_a));
    assert_eq!(out_b.status.code(), Some(0), "{}", stderr(&out_b));
    let names = listing(a.path());
    assert_eq!(names.len(), 5);
    for name in names.iter().filter(|n| n.ends_with(".csv")) {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn figure4_curves_and_asymptotes() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["run", "figure4", "--L", "10,20"];
    args.extend(SMALL_PLAN);
    let out = dasrate(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let names = listing(dir.path());
    for ratio in ["ratio2", "ratio5"] {
        for kind in ["ca_sim", "da_sim", "ca_asym"] {
            assert!(names.contains(&format!("figure4_{kind}_{ratio}.csv")), "{names:?}");
        }
    }
    assert_eq!(names.len(), 7);
    for (ratio, label) in [(2.0, "ratio2"), (5.0, "ratio5")] {
        let asym = rows(&dir.path().join(format!("figure4_ca_asym_{label}.csv")));
        let expected = asym_rate_mrt_ca(&AsymptoticParams::new(ratio, 4.0).unwrap());
        assert!(asym.iter().all(|r| r.value == round_value(expected) && r.method == Method::Asymptotic));
        let sim = rows(&dir.path().join(format!("figure4_ca_sim_{label}.csv")));
        assert_eq!(sim.iter().map(|r| r.x).collect::<Vec<_>>(), [10.0, 20.0]);
        assert!(sim.iter().all(|r| r.method == Method::MonteCarlo && r.n_samples > 0));
    }
}

#[test]
fn figure7_closed_form_at_caption_parameters() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["run", "figure7", "--L", "10,20", "--ratio", "2"];
    args.extend(SMALL_PLAN);
    let out = dasrate(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(listing(dir.path()).len(), 5);
    let closed = rows(&dir.path().join("figure7_ca_closed_ratio2.csv"));
    let expected = avg_rate_zfbf_ca(10, 5, 100.0, 4.0).unwrap().value;
    assert!((expected - 9.529).abs() < 1e-3);
    assert!(closed.iter().all(|r| r.value == round_value(expected)));
    let bound = rows(&dir.path().join("figure7_da_lb_ratio2.csv"));
    assert!(bound.iter().all(|r| r.method == Method::BoundLower));
    assert!(bound[1].value > bound[0].value);
}

#[test]
fn figure2_figure3_figure6_shapes() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["run", "figure2", "--L", "12", "--K", "4"];
    args.extend(SMALL_PLAN);
    let out = dasrate(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for curve in ["ca_closed", "da_closed", "ca_sim", "da_sim"] {
        let r = rows(&dir.path().join(format!("figure2_{curve}.csv")));
        assert_eq!(r.iter().map(|r| r.x).collect::<Vec<_>>(), [1.0, 2.0, 3.0, 4.0], "{curve}");
    }

    let out = dasrate(dir.path(), &["run", "figure3", "--upsilon", "1,4,16"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let ca = rows(&dir.path().join("figure3_ca_asym.csv"));
    let da = rows(&dir.path().join("figure3_da_ub_asym.csv"));
    assert!(ca.iter().zip(&da).all(|(c, d)| d.value > c.value));

    let out = dasrate(dir.path(), &["run", "figure6", "--L", "16,64", "--upsilon", "2,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let l16 = rows(&dir.path().join("figure6_da_lb_L16.csv"));
    let l64 = rows(&dir.path().join("figure6_da_lb_L64.csv"));
    assert!(l16.iter().zip(&l64).all(|(a, b)| b.value > a.value));
}

#[test]
fn json_output_carries_rows_and_meta() {
    let (csv_dir, json_dir) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = ["run", "figure3", "--upsilon", "2,8"];
    assert_eq!(dasrate(csv_dir.path(), &args).status.code(), Some(0));
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    assert_eq!(dasrate(json_dir.path(), &json_args).status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(json_dir.path().join("figure3_ca_asym.json")).unwrap())
            .unwrap();
    assert_eq!(doc["meta"]["curve"], "ca_asym");
    let json_rows: Vec<Row> = serde_json::from_value(doc["rows"].clone()).unwrap();
    assert_eq!(json_rows, rows(&csv_dir.path().join("figure3_ca_asym.csv")));
}

#[test]
fn infeasible_and_malformed_configs_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dasrate(
        dir.path(),
        &["run", "sweep", "--scheme", "zfbf", "--L", "4", "--K", "8"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("infeasible parameters"), "{}", stderr(&out));
    assert!(!dir.path().exists() || listing(dir.path()).is_empty());

    let out = dasrate(dir.path(), &["run", "figure4", "--L", "15"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("non-integer K"), "{}", stderr(&out));

    let bad = dir.path().join("bad.toml");
    fs::create_dir_all(dir.path()).unwrap();
    fs::write(&bad, "[grid]\nantennas = \"many\"\n").unwrap();
    let out = dasrate(dir.path(), &["run", "sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = dasrate(dir.path(), &["run", "figure4", "--alpha", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_with_cli_override() {
    let dir = TempDir::new().unwrap();
    fs::create_dir_all(dir.path()).unwrap();
    let file = dir.path().join("exp.toml");
    fs::write(
        &file,
        "experiment = \"scenario\"\n[grid]\nantennas = [40]\nusers = [10]\nsnr_db = 10.0\n\
         [scenario]\nlayouts = [\"ca\"]\nschemes = [\"zfbf\"]\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dasrate"))
        .args(["show-config", "--config", file.to_str().unwrap(), "--snr-db", "30"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["grid"]["snr_db"], 30.0);
    assert_eq!(cfg["selection"]["schemes"][0], "zfbf");

    let out = Command::new(env!("CARGO_BIN_EXE_dasrate"))
        .args(["run", "--config", file.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let got = rows(&dir.path().join("scenario_zfbf_ca_analytic.csv"));
    // 10 dB budget, L/K = 4: log2(10 * 3) + 2 log2(e).
    let expected = (30f64).log2() + 2.0 * std::f64::consts::LOG2_E;
    assert!((got[0].value - expected).abs() < 1e-10);
}

#[test]
fn paper_scale_flag_restores_published_counts() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dasrate"))
        .args(["show-config", "figure4", "--paper-scale", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["plan"]["user_realizations"], 500);
    assert_eq!(cfg["plan"]["antenna_realizations"], 50);
}

fn method_strategy() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::ClosedForm),
        Just(Method::BoundUpper),
        Just(Method::BoundLower),
        Just(Method::MonteCarlo),
        Just(Method::Asymptotic),
    ]
}

proptest! {
    #[test]
    fn csv_round_trip_any_rows(
        raw in prop::collection::vec(
            (-1e6f64..1e6, -1e3f64..1e3, method_strategy(), prop::option::of(0f64..10.0), 0u64..1_000_000, any::<u64>()),
            0..20,
        )
    ) {
        let rows: Vec<Row> = raw
            .into_iter()
            .map(|(x, v, method, stderr, n, seed)| {
                let estimate = match stderr {
                    Some(s) => dasrate::RateEstimate::sampled(v, method, s, n.max(1)),
                    None => dasrate::RateEstimate::exact(v, method),
                };
                Row::new(x, estimate, seed)
            })
            .collect();
        let text = csv_text(&rows);
        prop_assert_eq!(parse_csv(&text).unwrap(), rows);
    }
}
