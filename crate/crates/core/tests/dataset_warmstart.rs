use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::thread;
use std::time::Duration;

use greencap::climate::ClusterSpec;
use greencap::codec::{
    emit_dataset, list_pbm, raw_features, read_features, sample_image, Artifact, DatasetManifest, DatasetOptions,
    ImageSidecar, PcaModel, ScenarioImage, Weighting, FEATURE_LEN,
};
use greencap::family::{random_decision, tiny_case};
use greencap::solverbridge::Solver;
use greencap::warmstart::{
    load_batch, surrogate_bound, to_initial_columns, FileDropProvider, HttpProvider, ScenarioProvider, WarmstartError,
};
use greencap::wesp::{all_corners, default_columns, is_corner, run_cg, CgOptions, DiscreteDistribution, Mode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One instance shape, several plans, so every raw feature has the same width.
fn artifacts(count: u64) -> Vec<Artifact> {
    let (inst, clusters, _) = tiny_case(0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = Vec::new();
    for _ in 0..count {
        let x = random_decision(&inst, 0.5, &mut rng);
        for cl in clusters.clone() {
            let corners = all_corners(&cl).unwrap();
            let picked: Vec<_> = corners.into_iter().step_by(2).take(3).collect();
            let p = 1.0 / picked.len() as f64;
            out.push(Artifact {
                instance: inst.clone(),
                cluster: cl,
                x: x.clone(),
                distribution: DiscreteDistribution {
                    probabilities: vec![p; picked.len()],
                    scenarios: picked,
                },
            });
        }
    }
    out
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn dataset_layout_matches_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut arts = artifacts(6);
    arts[1].distribution = DiscreteDistribution::default();
    let opts = DatasetOptions {
        images_per_item: 3,
        rows: 20,
        weighting: Weighting::Probability,
        seed: 9,
    };
    let m = emit_dataset(dir.path(), &arts, &opts).unwrap();
    assert_eq!(m.skipped, vec![1]);
    assert_eq!(m.items, 3 * (arts.len() - 1));
    assert_eq!(m.feature_len, FEATURE_LEN);

    // features.csv: no header, one 50-wide row per image
    let text = fs::read_to_string(dir.path().join("features.csv")).unwrap();
    assert!(text.lines().next().unwrap().split(',').all(|t| t.parse::<f64>().is_ok()));
    let rows = read_features(dir.path()).unwrap();
    assert_eq!(rows.len(), m.items);

    let pbms = list_pbm(&dir.path().join("images")).unwrap();
    assert_eq!(pbms.len(), m.items);
    for (n, p) in pbms.iter().enumerate() {
        assert_eq!(p.file_name().unwrap().to_str().unwrap(), format!("{n:06}.pbm"));
        let img = ScenarioImage::read(p).unwrap();
        assert_eq!(img.rows.len(), 20);
        assert!(img.is_sorted());
        let side: ImageSidecar = serde_json::from_str(&fs::read_to_string(p.with_extension("json")).unwrap()).unwrap();
        assert_eq!(side.id, format!("{n:06}"));
        assert_eq!(side.feature, rows[n]);
        assert_eq!(img.cols, arts[side.artifact].cluster.num_cells());
    }

    let loaded = DatasetManifest::load(dir.path()).unwrap();
    assert_eq!(loaded, m);
    for (rel, digest) in &m.files {
        assert_eq!(&sha(&dir.path().join(rel)), digest, "{rel}");
    }

    // same inputs, same bytes
    let again = tempfile::tempdir().unwrap();
    assert_eq!(emit_dataset(again.path(), &arts, &opts).unwrap().dataset_hash, m.dataset_hash);
    let other = DatasetOptions { seed: 10, ..opts };
    assert_ne!(emit_dataset(again.path(), &arts, &other).unwrap().dataset_hash, m.dataset_hash);
}

#[test]
fn pca_features_are_fixed_length_and_deterministic() {
    let (inst, clusters, x) = tiny_case(5);
    let raw = raw_features(&x, &inst, &clusters[0]);
    let a = fitted_pca(5);
    assert_eq!(a, fitted_pca(5));
    assert!(a.explained >= 0.99 - 1e-9);
    assert_eq!(a.project(&raw).unwrap().len(), FEATURE_LEN);
    assert!(a.project(&raw[1..]).is_err());
    assert!(PcaModel::default().project(&raw).is_err());
}

fn write_image(dir: &Path, name: &str, img: &ScenarioImage) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join(name), img.to_pbm()).unwrap();
}

fn support_image(cl: &ClusterSpec, seed: u64) -> ScenarioImage {
    let corners = all_corners(cl).unwrap();
    let dist = DiscreteDistribution {
        probabilities: vec![1.0 / corners.len() as f64; corners.len()],
        scenarios: corners,
    };
    sample_image(&dist, cl, 10, Weighting::Uniform, seed).unwrap()
}

#[test]
fn file_drop_reads_valid_images_and_drops_the_rest() {
    let (inst, clusters, x) = tiny_case(3);
    let cl = &clusters[0];
    let root = tempfile::tempdir().unwrap();
    let provider = FileDropProvider::new(root.path());
    let dir = provider.cluster_dir(cl.id);
    assert!(dir.ends_with(format!("cluster_{}", cl.id)));

    // nothing dropped yet
    assert!(matches!(load_batch(&dir, cl), Err(WarmstartError::NoValidImages(_))));
    assert!(provider.columns(&inst, cl, &x).is_empty());

    for s in 0..3 {
        write_image(&dir, &format!("gen_{s}.pbm"), &support_image(cl, s));
    }
    let wrong = ScenarioImage {
        cols: cl.num_cells() + 1,
        rows: vec![vec![0; cl.num_cells() + 1]],
    };
    write_image(&dir, "wrong.pbm", &wrong);
    fs::write(dir.join("broken.pbm"), "P1\n3 3\n0 1\n").unwrap();
    fs::write(dir.join("notes.txt"), "ignored").unwrap();

    let batch = load_batch(&dir, cl).unwrap();
    assert_eq!(batch.images.len(), 3);
    assert_eq!(batch.cluster_id, cl.id);
    let cols = provider.columns(&inst, cl, &x);
    assert!(!cols.is_empty());
    for xi in default_columns(cl) {
        assert!(cols.contains(&xi));
    }
    assert_eq!(cols, to_initial_columns(&batch, cl));
    assert!(cols.iter().filter(|c| !default_columns(cl).contains(c)).all(|c| is_corner(cl, c)));
}

/// Serves one warm-start request and hands back the parsed request body.
fn mock_server(reply: impl Fn(&serde_json::Value) -> String + Send + 'static) -> (String, thread::JoinHandle<serde_json::Value>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/warmstart", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        assert!(request_line.starts_with("POST /warmstart"), "{request_line}");
        let mut len = 0;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h).unwrap();
            if h.trim().is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let out = reply(&req);
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
            out.len()
        )
        .unwrap();
        req
    });
    (url, handle)
}

fn fitted_pca(seed: u64) -> PcaModel {
    let (inst, clusters, x) = tiny_case(seed);
    let raws: Vec<Vec<f64>> = (0..6)
        .map(|k| {
            let mut r = raw_features(&x, &inst, &clusters[0]);
            r.iter_mut().enumerate().for_each(|(c, v)| *v += ((c * 7 + k * 13) % 5) as f64);
            r
        })
        .collect();
    PcaModel::fit(&raws).unwrap()
}

#[test]
fn http_contract_round_trip() {
    let (inst, clusters, x) = tiny_case(5);
    let cl = clusters[0].clone();
    let images: Vec<String> = (0..2).map(|s| support_image(&cl, s).to_pbm()).collect();
    let id = cl.id;
    let (url, server) = mock_server(move |req| {
        serde_json::json!({
            "cluster_id": req["cluster_id"],
            "images": images,
            "provenance": "mock-generator",
        })
        .to_string()
    });
    let provider = HttpProvider::new(url, fitted_pca(5), Duration::from_secs(10));
    let batch = provider.fetch(&inst, &cl, &x).unwrap();
    let req = server.join().unwrap();

    assert_eq!(req["cluster_id"], serde_json::json!(id));
    let feature = req["feature"].as_array().unwrap();
    assert_eq!(feature.len(), FEATURE_LEN);
    assert!(feature.iter().all(|v| v.as_f64().unwrap().is_finite()));
    assert_eq!(batch.images.len(), 2);
    assert_eq!(batch.provenance, "mock-generator");
    assert_eq!(batch.feature.as_ref().unwrap().len(), FEATURE_LEN);
}

#[test]
fn http_failures_fall_back_to_no_columns() {
    let (inst, clusters, x) = tiny_case(5);
    let cl = clusters[0].clone();
    let (url, server) = mock_server(|_| serde_json::json!({"cluster_id": 99, "images": [], "provenance": ""}).to_string());
    let provider = HttpProvider::new(url, fitted_pca(5), Duration::from_secs(10));
    assert!(provider.columns(&inst, &cl, &x).is_empty());
    server.join().unwrap();

    // nothing listening
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dead = HttpProvider::new(format!("http://127.0.0.1:{port}/"), fitted_pca(5), Duration::from_secs(2));
    assert!(matches!(dead.fetch(&inst, &cl, &x), Err(WarmstartError::Transport(_))));
}

#[test]
fn surrogate_bound_is_a_lower_bound() {
    let solver = Solver::default();
    let mut checked = 0;
    for seed in 0..30 {
        let (inst, clusters, x) = tiny_case(seed);
        for cl in &clusters {
            let Ok(exact) = run_cg(&solver, &inst, cl, &x, Mode::Optimality, &default_columns(cl), &CgOptions::default()) else {
                continue;
            };
            let partial: Vec<_> = exact.distribution.scenarios.iter().take(1).cloned().chain(default_columns(cl)).collect();
            let sb = surrogate_bound(&solver, &inst, cl, &x, &partial).unwrap();
            assert!(sb.value <= exact.value + 1e-6 * exact.value.abs().max(1.0), "{} > {}", sb.value, exact.value);
            let full = surrogate_bound(&solver, &inst, cl, &x, &exact.columns).unwrap();
            assert!((full.value - exact.value).abs() <= 1e-6 * exact.value.abs().max(1.0));
            checked += 1;
        }
    }
    assert!(checked > 10);
    // a single column outside the window admits no distribution
    let (inst, clusters, x) = tiny_case(0);
    let cl = &clusters[0];
    let sb = surrogate_bound(&solver, &inst, cl, &x, &[cl.xi_upper.clone()]).unwrap();
    assert_eq!(sb.value, f64::NEG_INFINITY);
    assert!(!sb.tight);
}
