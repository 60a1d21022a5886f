use confound_audit::data::{read_cohort, write_cohort, ColumnMap};
use confound_audit::pipeline::{run_pipeline, RunConfig, RunManifest};
use confound_audit::report::{Frame, FOREST_REFERENCE};
use confound_audit::synth::{synth_cohort, SynthConfig};

fn small(seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.synth.n_population = 12_000;
    cfg.forest.n_trees = 25;
    cfg.stratified.min_per_class = 2;
    cfg.probe.subsample_per_class = 300;
    cfg.probe.calibration_size = 600;
    cfg.probe.weak.k_max = 6;
    cfg
}

#[test]
fn bundle_has_every_figure_with_a_csv() {
    let b = run_pipeline(&small(1)).unwrap();
    for name in ["roc", "eu", "strata", "probe", "calibration", "two_by_two"] {
        let svg = &b.figures[&format!("{name}.svg")];
        assert!(svg.starts_with("<svg") && !svg.contains("href"), "{name}");
        assert!(b.tables.contains_key(&format!("{name}.csv")), "{name}");
    }
    assert!(b.tables.contains_key("summary.csv"));
    assert_eq!(b.manifest.outputs.len(), b.figures.len() + b.tables.len());
    let strata = &b.figures["strata.svg"];
    assert!(strata.contains("stroke-dasharray"));
    assert_eq!(FOREST_REFERENCE, 0.62);
}

#[test]
fn seed_changes_outputs_and_manifest_pins_them() {
    let a = run_pipeline(&small(1)).unwrap();
    let b = run_pipeline(&small(2)).unwrap();
    assert_ne!(a.tables["roc.csv"], b.tables["roc.csv"]);
    assert_ne!(a.manifest.config_sha256, b.manifest.config_sha256);
    let m = RunManifest::from_json(&a.manifest.to_json()).unwrap();
    assert_eq!(m.config, small(1));
    assert_eq!(m.seeds, small(1).stage_seeds());
}

#[test]
fn roc_csv_replots_to_svg_polylines() {
    let b = run_pipeline(&small(3)).unwrap();
    let mut rdr = csv::Reader::from_reader(b.tables["roc.csv"].as_bytes());
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let pt = (rec[2].parse().unwrap(), rec[3].parse().unwrap());
        match series.last_mut() {
            Some((n, pts)) if n == &rec[0] => pts.push(pt),
            _ => series.push((rec[0].to_string(), vec![pt])),
        }
    }
    assert_eq!(series.len(), 3);
    let frame = Frame::new((0.0, 1.0), (0.0, 1.0));
    let svg = &b.figures["roc.svg"];
    for (name, pts) in series {
        let needle = format!("data-series=\"{name}\"");
        let line = svg.lines().find(|l| l.contains(&needle)).unwrap();
        let attr = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(attr, frame.polyline_points(&pts), "{name}");
    }
}

#[test]
fn cohort_csv_round_trip() {
    let cfg = SynthConfig {
        n_population: 3000,
        seed: 4,
        ..SynthConfig::default()
    };
    let (_, c) = synth_cohort(&cfg).unwrap();
    let mut buf = Vec::new();
    write_cohort(&c, &mut buf).unwrap();
    let back = read_cohort(buf.as_slice(), &ColumnMap::identity(), "memory").unwrap();
    assert_eq!(back.len(), c.len());
    for (a, b) in c.iter().zip(back.iter()) {
        assert_eq!((a.id.as_str(), a.label, a.age_years, a.gender), (b.id.as_str(), b.label, b.age_years, b.gender));
        assert_eq!(a.symptoms, b.symptoms);
    }
}
