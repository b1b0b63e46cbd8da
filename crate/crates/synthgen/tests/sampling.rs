use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosepoint_core::{class_distribution, OrganLabel, PartLabel, Point3};
use rosepoint_synthgen::{
    generate_plant, mesh_area, sample_mesh, sample_mesh_traced, OrganMesh, PlantMesh, PlantParams, SynthError,
    SAMPLING_DENSITY,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn single(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>, organ: OrganLabel) -> PlantMesh {
    PlantMesh { organs: vec![OrganMesh::new(vertices, triangles, organ).unwrap()], seed: 0 }
}

/// Area from the Gram determinant, independent of the cross-product formula.
fn gram_area(a: Point3, b: Point3, c: Point3) -> f64 {
    let u: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
    let v: Vec<f64> = (0..3).map(|i| c[i] - a[i]).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    0.5 * (dot(&u, &u) * dot(&v, &v) - dot(&u, &v).powi(2)).max(0.0).sqrt()
}

fn random_mesh(rng: &mut ChaCha8Rng, n: usize) -> PlantMesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    while triangles.len() < n {
        let p: Vec<Point3> = (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
        if gram_area(p[0], p[1], p[2]) < 1e-3 {
            continue;
        }
        let base = vertices.len();
        vertices.extend(p);
        triangles.push([base, base + 1, base + 2]);
    }
    single(vertices, triangles, OrganLabel::Leaflet)
}

#[test]
fn area_matches_permuted_independent_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mesh = random_mesh(&mut rng, 100);
    let organ = &mesh.organs[0];
    let mut areas: Vec<f64> = (0..100).map(|t| {
        let [a, b, c] = organ.triangle(t);
        gram_area(a, b, c)
    })
    .collect();
    areas.shuffle(&mut rng);
    let oracle: f64 = areas.iter().sum();
    assert!((mesh_area(&mesh) - oracle).abs() < 1e-9);
}

#[test]
fn samples_lie_inside_their_triangle() {
    let (a, b, c) = ([0.3, -1.0, 2.0], [2.5, 0.4, 1.0], [-0.7, 1.9, 0.5]);
    let mesh = single(vec![a, b, c], vec![[0, 1, 2]], OrganLabel::Petal);
    let density = 1000.0 / mesh_area(&mesh);
    let cloud = sample_mesh(&mesh, density, 8).unwrap();
    assert_eq!(cloud.len(), 1000);
    let u: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
    let v: Vec<f64> = (0..3).map(|i| c[i] - a[i]).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let (uu, uv, vv) = (dot(&u, &u), dot(&u, &v), dot(&v, &v));
    let det = uu * vv - uv * uv;
    for p in cloud.positions() {
        let w: Vec<f64> = (0..3).map(|i| p[i] - a[i]).collect();
        let (wu, wv) = (dot(&w, &u), dot(&w, &v));
        let s = (vv * wu - uv * wv) / det;
        let t = (uu * wv - uv * wu) / det;
        let off_plane: f64 = (0..3).map(|i| (a[i] + s * u[i] + t * v[i] - p[i]).powi(2)).sum::<f64>().sqrt();
        assert!(off_plane < 1e-9);
        assert!(s >= -1e-9 && t >= -1e-9 && s + t <= 1.0 + 1e-9, "({s}, {t})");
    }
    assert!(cloud.labels().unwrap().iter().all(|&l| l == PartLabel::Flower));
}

#[test]
fn triangle_frequencies_follow_area_ratio() {
    let vertices = vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [10.0, 0.0, 0.0], [11.0, 0.0, 0.0], [10.0, 1.0, 0.0]];
    let mesh = single(vertices, vec![[0, 1, 2], [3, 4, 5]], OrganLabel::Stem);
    let density = 40_000.0 / mesh_area(&mesh);
    let (cloud, sources) = sample_mesh_traced(&mesh, density, 2024).unwrap();
    assert_eq!(cloud.len(), 40_000);
    let big = sources.iter().filter(|r| r.triangle == 0).count() as f64;
    let small = 40_000.0 - big;
    let (eb, es) = (30_000.0, 10_000.0);
    let stat = (big - eb).powi(2) / eb + (small - es).powi(2) / es;
    let p = 1.0 - ChiSquared::new(1.0).unwrap().cdf(stat);
    assert!(p >= 0.001, "chi-square {stat}, p {p}");
}

#[test]
fn zero_density_is_rejected() {
    let mesh = single(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]], OrganLabel::Stem);
    assert!(matches!(sample_mesh(&mesh, 0.0, 0), Err(SynthError::Sampling(_))));
    let empty = PlantMesh { organs: vec![], seed: 0 };
    assert!(matches!(sample_mesh(&empty, 10.0, 0), Err(SynthError::Sampling(_))));
}

#[test]
fn default_plants_have_paper_scale_clouds() {
    let params = PlantParams::default();
    let mut totals = [0usize; 3];
    let mut all_labels = Vec::new();
    for seed in 0..48 {
        let mesh = generate_plant(&params, seed).unwrap();
        let cloud = sample_mesh(&mesh, SAMPLING_DENSITY, seed).unwrap();
        assert!((150_000..=300_000).contains(&cloud.len()), "seed {seed}: {} points", cloud.len());
        for l in cloud.labels().unwrap() {
            totals[l.index()] += 1;
        }
        if seed < 4 {
            all_labels.extend_from_slice(cloud.labels().unwrap());
        }
    }
    let n: usize = totals.iter().sum();
    let frac: Vec<f64> = totals.iter().map(|&c| c as f64 / n as f64).collect();
    let (flower, leaf, stem) = (frac[0], frac[1], frac[2]);
    assert!(leaf > stem && leaf > flower);
    assert!((leaf - 0.6580).abs() < 0.10 && (stem - 0.1795).abs() < 0.10 && (flower - 0.1625).abs() < 0.10, "{frac:?}");
    let dist = class_distribution(&all_labels).unwrap();
    assert!(dist[PartLabel::Leaf.index()] > dist[PartLabel::Stem.index()]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn count_contract_and_label_consistency(seed in 0u64..1000, density in 0.5f64..40.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut organs = random_mesh(&mut rng, 5).organs;
        organs.push(OrganMesh::new(vec![[0.0; 3], [2.0, 0.0, 0.0], [0.0, 2.0, 1.0]], vec![[0, 1, 2]], OrganLabel::Sepal).unwrap());
        let mesh = PlantMesh { organs, seed };
        let expected = (density * mesh_area(&mesh)).round() as usize;
        let (cloud, sources) = sample_mesh_traced(&mesh, density, seed).unwrap();
        prop_assert_eq!(cloud.len(), expected);
        for (label, r) in cloud.labels().unwrap().iter().zip(&sources) {
            prop_assert_eq!(*label, mesh.organs[r.organ].organ().part());
        }
        prop_assert_eq!(sample_mesh(&mesh, density, seed).unwrap(), cloud);
    }
}
