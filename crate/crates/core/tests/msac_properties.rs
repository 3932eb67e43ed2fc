use esans_core::data::{generate_synthetic, EmbeddingTable, SyntheticSpec};
use esans_core::msac::{
    build_semantic_index, fuse_primary, init_codebooks, msac_objective, residual_secondary, train_msac,
    AlignmentParams, MsacConfig, MsacInputs, ALIGN_PAIRS,
};
use esans_core::tensor::{cosine_slices, sq_dist, RngState};
use esans_core::Matrix;

fn dataset(seed: u64, noise: f64) -> [EmbeddingTable<f32>; 3] {
    let spec = SyntheticSpec {
        num_users: 5,
        num_items: 160,
        num_groups: 8,
        subgroups_per_group: 2,
        modal_dims: [10, 8, 6],
        intra_group_noise: noise,
        seed,
        ..Default::default()
    };
    generate_synthetic(&spec).unwrap().tables
}

fn config(seed: u64) -> MsacConfig {
    MsacConfig {
        d_m: 8,
        k_p: 8,
        k_s: 3,
        batch_size: 32,
        epochs: 3,
        learning_rate: 0.005,
        kmeans_restarts: 3,
        seed,
        ..Default::default()
    }
}

fn inputs(tables: &[EmbeddingTable<f32>; 3]) -> MsacInputs {
    MsacInputs::prepare([&tables[0], &tables[1], &tables[2]]).unwrap()
}

#[test]
fn trained_assignments_are_nearest_codewords() {
    let x = inputs(&dataset(1, 0.2));
    let model = train_msac(&x, &config(3)).unwrap();
    let index = build_semantic_index(&model.params, &model.codebooks, &x).unwrap();
    let m = model.params.project([&x.views[0], &x.views[1], &x.views[2]]).unwrap();
    let r_p = fuse_primary(&m);
    let cp = model.codebooks.primary.codewords();
    let z = cp.select_rows(index.primary_assignments());
    let r_s = residual_secondary(&m, &z).unwrap();
    let cs = model.codebooks.secondary.codewords();
    for i in 0..x.len() {
        let own = sq_dist(r_p.row(i), cp.row(index.primary(i)));
        assert!((0..cp.rows()).all(|k| own <= sq_dist(r_p.row(i), cp.row(k))));
        let own = sq_dist(r_s.row(i), cs.row(index.secondary(i)));
        assert!((0..cs.rows()).all(|k| own <= sq_dist(r_s.row(i), cs.row(k))));
    }
    let d = index.distances();
    for i in 0..d.rows() {
        assert_eq!(d.get(i, i), 0.0);
        for j in 0..d.rows() {
            assert_eq!(d.get(i, j), d.get(j, i));
            assert!((0.0..=1.0).contains(&d.get(i, j)));
        }
    }
}

#[test]
fn kmeans_init_beats_random_codebooks() {
    let x = inputs(&dataset(2, 0.2));
    let mut kmeans_sq = 0.0;
    let mut random_sq = 0.0;
    for seed in 0..5 {
        let cfg = config(seed);
        let mut rng = RngState::new(seed);
        let params = AlignmentParams::<f64>::random(x.input_dims(), cfg.d_m, &mut rng);
        let cb = init_codebooks(&params, &x, &cfg, &mut rng).unwrap();
        let all = [&x.views[0], &x.views[1], &x.views[2]];
        kmeans_sq += msac_objective(&params, cb.primary.codewords(), cb.secondary.codewords(), all, &cfg, None).unwrap().0.sq;

        let m = params.project(all).unwrap();
        let spread = (m.views[0].as_slice().iter().map(|v| v * v).sum::<f64>() / m.views[0].as_slice().len() as f64).sqrt();
        let p = Matrix::from_fn(cfg.k_p, cfg.d_m, |_, _| rng.normal() * spread);
        let s = Matrix::from_fn(cfg.k_s, 3 * cfg.d_m, |_, _| rng.normal() * spread);
        random_sq += msac_objective(&params, &p, &s, all, &cfg, None).unwrap().0.sq;
    }
    assert!(kmeans_sq <= random_sq, "{kmeans_sq} > {random_sq}");
}

fn separation(params: &AlignmentParams<f64>, x: &MsacInputs) -> f64 {
    let m = params.project([&x.views[0], &x.views[1], &x.views[2]]).unwrap();
    let n = x.len();
    let mut total = 0.0;
    for &(a, b) in &ALIGN_PAIRS {
        let (mut matched, mut mismatched) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let c = cosine_slices(m.views[a].row(i), m.views[b].row(j)).unwrap();
                if i == j {
                    matched += c;
                } else {
                    mismatched += c;
                }
            }
        }
        total += matched / n as f64 - mismatched / (n * (n - 1)) as f64;
    }
    total / ALIGN_PAIRS.len() as f64
}

#[test]
fn alignment_separation_grows_over_first_epochs() {
    let mut curve = [0.0; 4];
    for seed in 0..5 {
        let x = inputs(&dataset(10 + seed, 0.3));
        for (epochs, slot) in curve.iter_mut().enumerate() {
            let model = train_msac(&x, &MsacConfig { epochs, ..config(seed) }).unwrap();
            *slot += separation(&model.params, &x) / 5.0;
        }
    }
    for w in curve.windows(2) {
        assert!(w[1] > w[0], "{curve:?}");
    }
}

#[test]
fn permuting_input_rows_permutes_the_index() {
    let tables = dataset(4, 0.2);
    let n = tables[0].len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
    let shuffled = tables.clone().map(|t| {
        let ids = perm.iter().map(|&i| t.item_order()[i].clone()).collect();
        EmbeddingTable::new(ids, t.matrix().select_rows(&perm), t.modality()).unwrap()
    });
    let cfg = config(5);
    let (a, b) = (inputs(&tables), inputs(&shuffled));
    let ma = train_msac(&a, &cfg).unwrap();
    let ia = build_semantic_index(&ma.params, &ma.codebooks, &a).unwrap();
    let mb = train_msac(&b, &cfg).unwrap();
    let ib = build_semantic_index(&mb.params, &mb.codebooks, &b).unwrap();
    for id in tables[0].item_order() {
        let (i, j) = (ia.item_idx(id).unwrap(), ib.item_idx(id).unwrap());
        assert_eq!((ia.primary(i), ia.secondary(i)), (ib.primary(j), ib.secondary(j)));
    }
}
