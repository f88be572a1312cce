use exvmc::ansatz::{Configuration, ExcitedPfaffianModel};
use exvmc::config::RunConfig;
use exvmc::numerics::{polar_factor, Mat, SkewMatrix};
use exvmc::pretraining::{
    antisym_loss, blockwise_align, build_graph, cluster_orbital_energies, orbital_loss, pretrain_fit, pretrain_loss_grad,
    propagate_orbitals, rmsd, run_targets, selector_overlap_det, selector_set, selector_violations, sign_agreement,
    synth_hf, PretrainError, PretrainOptions, PretrainTargets, Selector, Structure, SynthSpec,
};
use exvmc::sampler::WalkerEnsemble;
use exvmc::training::initial_walker;
use proptest::prelude::*;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn atoms(id: usize, nuclei: Vec<[f64; 3]>) -> Structure {
    let n = nuclei.len();
    Structure {
        id,
        charges: vec![1.0; n],
        nuclei,
        n_up: None,
        n_down: None,
        c: vec![1.0],
        s_basis: vec![1.0],
        eps: vec![0.0],
        basis: Vec::new(),
        parent_id: None,
        rotation: None,
    }
}

fn random_mat(rng: &mut SmallRng, r: usize, c: usize) -> Mat<f64> {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random orthogonal matrix from nalgebra's QR.
fn random_orthogonal(rng: &mut SmallRng, n: usize) -> Mat<f64> {
    let m = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = m.qr().q();
    Mat::from_fn(n, n, |i, j| q[(i, j)])
}

fn synth(id: usize, nuclei: Vec<[f64; 3]>, nb: usize, seed: u64) -> Structure {
    let charges = vec![1.0; nuclei.len()];
    synth_hf(&SynthSpec { id, nuclei, charges, basis_per_nucleus: nb, seed }).unwrap()
}

#[test]
fn rmsd_examples() {
    let a = atoms(0, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    assert_eq!(rmsd(&a, &a).unwrap(), 0.0);
    let one = atoms(1, vec![[0.0; 3]]);
    let moved = atoms(2, vec![[0.0, 0.7, 0.0]]);
    assert!((rmsd(&one, &moved).unwrap() - 0.7).abs() < 1e-15);
    let b = atoms(3, vec![[3.0, 0.0, 0.0], [1.0, 4.0, 0.0]]);
    assert!((rmsd(&a, &b).unwrap() - 5.0 / 2f64.sqrt()).abs() < 1e-12);
    assert!(matches!(rmsd(&a, &one), Err(PretrainError::Mismatch { .. })));
}

#[test]
fn chain_of_three_is_rooted_at_the_centre() {
    let s = vec![atoms(1, vec![[0.0; 3]]), atoms(2, vec![[1.0, 0.0, 0.0]]), atoms(3, vec![[3.0, 0.0, 0.0]])];
    let g = build_graph(&s, false).unwrap();
    assert_eq!(g.root, 2);
    let pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.a, e.b)).collect();
    assert_eq!(pairs, vec![(1, 2), (2, 3)]);
    assert_eq!(g.eccentricity.values().copied().collect::<Vec<_>>(), vec![2, 1, 2]);
    assert_eq!(g.order, vec![2, 1, 3]);
}

#[test]
fn single_structure_and_star_graphs() {
    let g = build_graph(&[atoms(7, vec![[0.0; 3]])], false).unwrap();
    assert_eq!(g.root, 7);
    assert!(g.edges.is_empty());
    assert_eq!(g.order, vec![7]);

    let star = vec![
        atoms(0, vec![[1.0, 0.0, 0.0]]),
        atoms(1, vec![[0.0, 1.0, 0.0]]),
        atoms(5, vec![[0.0; 3]]),
        atoms(3, vec![[0.0, 0.0, 1.0]]),
    ];
    let g = build_graph(&star, false).unwrap();
    assert_eq!(g.root, 5);
    assert_eq!(g.eccentricity[&5], 1);
    assert!(g.parent.values().all(|&p| p == 5));
}

#[test]
fn duplicate_ids_are_rejected() {
    let s = vec![atoms(1, vec![[0.0; 3]]), atoms(1, vec![[1.0, 0.0, 0.0]])];
    assert!(matches!(build_graph(&s, false), Err(PretrainError::DuplicateId(1))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_invariants(points in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 1..9)) {
        let s: Vec<Structure> =
            points.iter().enumerate().map(|(i, &(x, y, z))| atoms(10 + i, vec![[x, y, z]])).collect();
        let g = build_graph(&s, false).unwrap();
        prop_assert_eq!(g.edges.len(), s.len() - 1);
        let root_ecc = g.eccentricity[&g.root];
        prop_assert!(g.eccentricity.values().all(|&e| e >= root_ecc));
        prop_assert_eq!(g.order.len(), s.len());
        for (k, id) in g.order.iter().enumerate().skip(1) {
            let p = g.parent[id];
            prop_assert!(g.order[..k].contains(&p));
        }
    }

    #[test]
    fn blockwise_alignment_is_monotone(seed in 0u64..500, split in 1usize..5) {
        let mut rng = SmallRng::seed_from_u64(seed);
        let n = 6;
        let child = random_orthogonal(&mut rng, n);
        let parent = random_orthogonal(&mut rng, n);
        let groups = vec![(0..split).collect::<Vec<_>>(), (split..n).collect()];
        let out = blockwise_align(&child, &parent, &Mat::identity(n), &groups).unwrap();
        for g in &groups {
            let before = child.select_columns(g).sub(&parent.select_columns(g)).frobenius_norm();
            let after = out.c.select_columns(g).sub(&parent.select_columns(g)).frobenius_norm();
            prop_assert!(after <= before + 1e-12);
            for &i in g {
                for j in 0..n {
                    if !g.contains(&j) {
                        prop_assert_eq!(out.rotation[(i, j)], 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn kde_clustering_examples() {
    let groups = cluster_orbital_energies(&[-10.0, -9.9, -1.0, -0.9], 0.5).unwrap();
    assert_eq!(groups, vec![vec![0, 1], vec![2, 3]]);
    let groups = cluster_orbital_energies(&[-2.0; 4], 0.5).unwrap();
    assert_eq!(groups, vec![vec![0, 1, 2, 3]]);
    let groups = cluster_orbital_energies(&[0.3, -1.0, 0.31, 2.0], 1e-6).unwrap();
    assert_eq!(groups, vec![vec![1], vec![0], vec![2], vec![3]]);
    assert!(matches!(cluster_orbital_energies(&[0.0], 0.0), Err(PretrainError::Bandwidth(_))));
}

#[test]
fn single_group_equals_global_procrustes() {
    let mut rng = SmallRng::seed_from_u64(3);
    let child = random_orthogonal(&mut rng, 5);
    let parent = random_orthogonal(&mut rng, 5);
    let out = blockwise_align(&child, &parent, &Mat::identity(5), &[(0..5).collect()]).unwrap();
    let global = polar_factor(&child.t_matmul(&parent)).unwrap().rotation;
    assert!(out.rotation.sub(&global).max_abs() < 1e-12);
}

#[test]
fn identity_overlap_gives_identity_rotation() {
    let c = Mat::identity(4);
    let out = blockwise_align(&c, &c, &Mat::identity(4), &[vec![0], vec![1, 2], vec![3]]).unwrap();
    assert!(out.rotation.sub(&Mat::identity(4)).max_abs() < 1e-12);
}

#[test]
fn core_orbital_survives_blockwise_but_not_global_alignment() {
    let child = Mat::from_rows(&[vec![0.6, 0.8, 0.0], vec![0.8, -0.6, 0.0], vec![0.0, 0.0, 1.0]]);
    let parent = Mat::identity(3);
    let s = Mat::identity(3);
    let eps = [-10.0, -0.5, -0.4];
    let global = blockwise_align(&child, &parent, &s, &[vec![0, 1, 2]]).unwrap();
    // the aligned core column is mostly made of the child's diffuse orbital
    assert!(global.rotation[(0, 0)].powi(2) < 0.5);
    let groups = cluster_orbital_energies(&eps, 0.5).unwrap();
    assert_eq!(groups, vec![vec![0], vec![1, 2]]);
    let block = blockwise_align(&child, &parent, &s, &groups).unwrap();
    assert_eq!(block.rotation[(0, 0)].abs(), 1.0);
}

#[test]
fn identical_structures_propagate_unchanged() {
    let base = synth(0, vec![[0.0; 3], [1.4, 0.0, 0.0]], 2, 4);
    let structures: Vec<Structure> = (0..3).map(|id| Structure { id, ..base.clone() }).collect();
    let g = build_graph(&structures, false).unwrap();
    let (out, edges) = propagate_orbitals(&g, &structures, 0.5).unwrap();
    assert_eq!(edges.len(), 2);
    for s in &out {
        let diff = s.c_mat().sub(&base.c_mat()).max_abs();
        assert!(diff < 1e-10, "structure {} moved by {diff}", s.id);
    }
}

#[test]
fn permuted_columns_are_restored() {
    let parent = synth(0, vec![[0.0; 3], [1.4, 0.0, 0.0]], 2, 4);
    let perm = [2, 0, 3, 1];
    let pc = parent.c_mat();
    let mut child = parent.clone();
    child.id = 1;
    child.nuclei[1][0] = 1.41;
    child.c = Mat::from_fn(4, 4, |i, j| pc[(i, perm[j])]).into_vec();
    // degenerate energies put all orbitals in one block
    child.eps = vec![0.0; 4];
    let structures = vec![parent.clone(), child];
    let g = build_graph(&structures, false).unwrap();
    let (out, _) = propagate_orbitals(&g, &structures, 0.5).unwrap();
    let aligned = out.iter().find(|s| s.id != g.root).unwrap();
    let overlap = aligned.c_mat().t_matmul(&aligned.s_mat().matmul(&pc));
    assert!(overlap.sub(&Mat::identity(4)).max_abs() < 1e-8);
}

#[test]
fn perturbed_chain_alignment_reduces_distance() {
    let mut structures: Vec<Structure> =
        (0..3).map(|i| synth(i, vec![[0.0; 3], [1.4 + 0.05 * i as f64, 0.0, 0.0]], 2, 9)).collect();
    // scramble signs of the last child so the unaligned payload disagrees
    for s in structures.iter_mut().skip(1) {
        let n = s.n_orb();
        for i in 0..n {
            s.c[i * n + 1] = -s.c[i * n + 1];
        }
    }
    let g = build_graph(&structures, false).unwrap();
    let (out, edges) = propagate_orbitals(&g, &structures, 0.5).unwrap();
    for e in &edges {
        assert!(e.distance_after < e.distance_before, "{e:?}");
    }
    for s in &out {
        assert!(s.orthonormality_defect() < 1e-8);
    }
}

#[test]
fn selector_examples() {
    let ground = Selector { state: 0, occupied: vec![0, 1] };
    let single = selector_set(4, 2, &[vec![], vec![(1, 3)]]).unwrap();
    assert_eq!(single[1].occupied, vec![0, 3]);
    assert_eq!(selector_overlap_det(&ground, &single[1]), 0);
    let permuted = Selector { state: 0, occupied: vec![1, 0] };
    assert_eq!(selector_overlap_det(&ground, &permuted).abs(), 1);
    match selector_set(4, 2, &[vec![], vec![]]) {
        Err(PretrainError::Orthogonality(pairs)) => assert_eq!(pairs, vec![(0, 1)]),
        other => panic!("{other:?}"),
    }
    assert!(selector_violations(&single).is_empty());
}

#[test]
fn synthetic_payload_matches_analytic_overlap() {
    let s = synth(0, vec![[0.0; 3]], 4, 1);
    let exps = [0.5, 1.0, 2.0, 4.0];
    let m = s.s_mat();
    for i in 0..4 {
        for j in 0..4 {
            let (a, b) = (exps[i], exps[j]);
            let want = (2.0 * (a * b as f64).sqrt() / (a + b)).powf(1.5);
            assert!((m[(i, j)] - want).abs() < 1e-12);
        }
    }
    let na = nalgebra::DMatrix::from_fn(4, 4, |i, j| m[(i, j)]);
    assert!(na.cholesky().is_some());
    assert!(s.orthonormality_defect() < 1e-10);
    let again = synth(0, vec![[0.0; 3]], 4, 1);
    assert_eq!(s, again);
}

#[test]
fn orbital_loss_recovers_rotation_and_ignores_target_rotations() {
    let mut rng = SmallRng::seed_from_u64(5);
    let r0 = random_orthogonal(&mut rng, 4);
    let phis: Vec<Mat<f64>> = (0..20).map(|_| random_mat(&mut rng, 3, 4)).collect();
    let targets: Vec<Mat<f64>> = phis.iter().map(|p| p.matmul(&r0)).collect();
    let (loss, r) = orbital_loss(&phis, &targets).unwrap();
    assert!(loss < 1e-20);
    assert!(r.sub(&r0).max_abs() < 1e-10);

    let noisy: Vec<Mat<f64>> = (0..20).map(|_| random_mat(&mut rng, 3, 4)).collect();
    let q = random_orthogonal(&mut rng, 4);
    let rotated: Vec<Mat<f64>> = noisy.iter().map(|t| t.matmul(&q)).collect();
    let (a, _) = orbital_loss(&phis, &noisy).unwrap();
    let (b, _) = orbital_loss(&phis, &rotated).unwrap();
    assert!((a - b).abs() < 1e-10 * a.max(1.0));
}

#[test]
fn antisym_loss_vanishes_on_exact_fixture() {
    let mut rng = SmallRng::seed_from_u64(6);
    let r = random_orthogonal(&mut rng, 4);
    let sel = Selector { state: 0, occupied: vec![1, 3] };
    let pairing = SkewMatrix::<f64>::canonical_pairing(2).unwrap().to_dense();
    let mut b = Mat::zeros(4, 4);
    for (x, &i) in sel.occupied.iter().enumerate() {
        for (y, &j) in sel.occupied.iter().enumerate() {
            b[(i, j)] = pairing[(x, y)];
        }
    }
    let a = r.matmul(&b).matmul_t(&r);
    assert!(antisym_loss(&a, &r, &sel).unwrap() < 1e-20);
}

fn toy_model(n_states: usize) -> ExcitedPfaffianModel {
    ExcitedPfaffianModel::new(n_states, 1, 2, 1, vec![vec![0.0, 0.0, 0.0], vec![1.4, 0.0, 0.0]], 2).unwrap()
}

fn toy_targets(n_states: usize) -> PretrainTargets {
    let structure = synth(0, vec![[0.0; 3], [1.4, 0.0, 0.0]], 2, 3);
    let ex: Vec<Vec<(usize, usize)>> = (0..n_states).map(|s| if s == 0 { vec![] } else { vec![(1, 1 + s)] }).collect();
    PretrainTargets { selectors: selector_set(4, 2, &ex).unwrap(), structure }
}

fn random_configs(rng: &mut SmallRng, n: usize) -> Vec<Configuration> {
    (0..n)
        .map(|_| {
            let coords = (0..6).map(|k| rng.sample::<f64, _>(StandardNormal) + if k % 3 == 0 { 0.7 } else { 0.0 }).collect();
            Configuration::new(3, 1, coords).unwrap()
        })
        .collect()
}

#[test]
fn pretrain_gradient_matches_finite_differences() {
    let model = toy_model(2);
    let params = model.init_params(2, 0.3);
    let targets = toy_targets(2);
    let mut rng = SmallRng::seed_from_u64(8);
    let configs = random_configs(&mut rng, 16);
    let (_, grad) = pretrain_loss_grad(&model, &params, &configs, &targets).unwrap();
    let loss_at = |p: &[f64]| pretrain_loss_grad(&model, p, &configs, &targets).unwrap().0.total();
    let h = 1e-5;
    for k in (0..params.len()).step_by(7) {
        let mut p = params.values().to_vec();
        p[k] += h;
        let up = loss_at(&p);
        p[k] -= 2.0 * h;
        let down = loss_at(&p);
        let fd = (up - down) / (2.0 * h);
        assert!((fd - grad[k]).abs() < 1e-5 * (1.0 + fd.abs()), "param {k}: fd {fd}, analytic {}", grad[k]);
    }
}

#[test]
fn pretraining_fixes_the_sign_structure() {
    let cfg = RunConfig::from_json(
        r#"{
            "system": { "kind": "toy-molecular", "nuclei": [[0,0,0],[1.4,0,0]], "charges": [1,1],
                        "n_up": 1, "n_down": 1, "n_states": 1, "orbitals_per_nucleus": 2 },
            "sampler": { "n_walkers_total": 512, "decorr_steps": 5, "burn_in": 100 },
            "pretrain": { "enabled": true, "steps": 2000 },
            "seed": 3
        }"#,
    )
    .unwrap();
    let targets = run_targets(&cfg).unwrap();
    let model = toy_model(1);
    let mut params = model.init_params(cfg.seed, 0.05);
    let sampler = cfg.sampler.sampler_config();
    let mut ens =
        WalkerEnsemble::new(&model, &params, 512, 1, &sampler, |_, _, rng| initial_walker(&cfg.system, rng)).unwrap();
    ens.advance(&model, &params, 100, &sampler, true);
    let report = pretrain_fit(&model, &mut params, &targets, &mut ens, &sampler, &PretrainOptions::default()).unwrap();
    assert_eq!(report.orbital_loss.len(), 2000);
    assert!(report.orbital_loss.last().unwrap() < report.orbital_loss.first().unwrap());

    let mut test =
        WalkerEnsemble::new(&model, &params, 1000, 99, &sampler, |_, _, rng| initial_walker(&cfg.system, rng)).unwrap();
    test.advance(&model, &params, 200, &sampler, true);
    let configs = &test.chains[0].walkers;
    assert_eq!(configs.len(), 1000);
    let agree = sign_agreement(&model, &params, 0, &targets.structure, &targets.selectors[0], configs).unwrap();
    assert!(agree >= 0.95, "agreement {agree}");
}
