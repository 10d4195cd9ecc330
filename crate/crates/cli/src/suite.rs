//! Acceptance catalog: eleven self-checking experiments with exact oracles.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use soficlab_core::approx::all_pairs;
use soficlab_core::bernoulli::{
    coset_product, equivariance_defect, exact_mean, exact_variance, export_relation_data,
    finite_scale_slack, mc_stats, mu_theta, phi_f, sample_labels, select_good_sample,
    standard_family, variance_bound,
};
use soficlab_core::conjugacy::{align, brute_force, conjugacy_trend};
use soficlab_core::irs::{
    empirical_irs, fixed_fraction, stats_match, subgroup_violation, subsets_up_to, tv_distance,
};
use soficlab_core::relation::{atoms, close_family, full_report, RelationTolerances};
use soficlab_core::rng::{derive_seed, stream};
use soficlab_core::{
    frac, frac_to_f64, ActionSpec, AlignParams, AlignmentProblem, ApproxHom, CylinderFunction,
    Element, Frac, GroupSpec, IrsWindowSpec, Pattern, Permutation, Result, StepFunction, Window,
};

use crate::config::random_permutation;

#[derive(Clone, Debug)]
pub struct Criterion {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = Result<(bool, String)>;

/// Runs criterion `id` (1–11).
pub fn run_one(id: usize) -> Criterion {
    let (name, f): (&str, fn() -> Outcome) = match id {
        1 => ("exactness of honest actions", c1),
        2 => ("permanence identities", c2),
        3 => ("violation-mass inequalities", c3),
        4 => ("coset-product oracle equivalence", c4),
        5 => ("finite-scale consistency", c5),
        6 => ("Monte Carlo calibration", c6),
        7 => ("variance decay", c7),
        8 => ("good-sample selection", c8),
        9 => ("relation soficity end-to-end", c9),
        10 => ("conjugacy search", c10),
        11 => ("IRS mismatch detection", c11),
        _ => ("unknown", || Ok((false, "no such criterion".into()))),
    };
    let t = Instant::now();
    let (pass, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Criterion {
        id,
        name: name.into(),
        pass,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

pub fn run_all() -> Vec<Criterion> {
    (1..=11).map(run_one).collect()
}

fn z(v: i64) -> Element {
    Element::Lattice(vec![v])
}

fn rotation(d: usize, w: &Window) -> Result<ApproxHom> {
    let spec = GroupSpec::lattice(1);
    ApproxHom::from_action(
        &spec,
        &ActionSpec::Torus {
            moduli: vec![d as u64],
        },
        d,
        w,
    )
}

fn torus(spec: &GroupSpec, moduli: &[u64], w: &Window) -> Result<ApproxHom> {
    let a = ActionSpec::Torus {
        moduli: moduli.to_vec(),
    };
    ApproxHom::from_action(spec, &a, a.degree(spec)?, w)
}

fn c1() -> Outcome {
    let t = Instant::now();
    let mut worst = Frac::from(0);
    let mut eq_worst: f64 = 0.0;
    for (spec, moduli) in [
        (GroupSpec::lattice(1), vec![1000u64]),
        (GroupSpec::lattice(2), vec![32, 32]),
    ] {
        let w = spec.ball(3)?;
        let sigma = torus(&spec, &moduli, &w)?;
        let rep = sigma.defect(&all_pairs(&w))?;
        let cons = sigma.subgroup_consistency_defects(&w)?;
        let irs = empirical_irs(&sigma, &w)?;
        worst = worst
            .max(rep.max)
            .max(rep.identity_defect)
            .max(cons.total_mass())
            .max(irs.inconsistent_mass(&spec));
        let x = sample_labels(sigma.degree(), 1);
        for f in standard_family(&spec, 16)? {
            for g in w.elements() {
                eq_worst = eq_worst.max(equivariance_defect(&sigma, &x, &f, g)?.value);
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst == Frac::from(0) && eq_worst == 0.0 && secs < 5.0;
    Ok((
        pass,
        format!("max defect/violation {worst}, max equivariance {eq_worst}, {secs:.2}s"),
    ))
}

fn c2() -> Outcome {
    let spec = GroupSpec::lattice(2);
    let w = spec.ball(2)?;
    let mut rng = stream(2);
    let mut failures = 0;
    for case in 0..50u64 {
        let d = rng.gen_range(5..200);
        let sigma = ApproxHom::from_action(
            &spec,
            &ActionSpec::RandomGenerators { d, seed: case },
            d,
            &w,
        )?;
        let k = rng.gen_range(1..=3);
        let f: Vec<Element> = (0..k)
            .map(|_| w.get(rng.gen_range(0..w.len())).clone())
            .collect();
        let (q, r) = (rng.gen_range(2..6usize), rng.gen_range(0..d));
        let theta = fixed_fraction(&sigma, &f)?;
        let (di, ri, qi) = (d as i128, r as i128, q as i128);
        let ok = fixed_fraction(&sigma.block_sum(q)?, &f)? == theta
            && fixed_fraction(&sigma.pad_trivial(r)?, &f)? == (theta * di + ri) / frac(di + ri, 1)
            && fixed_fraction(&sigma.redimension(q * d + r)?, &f)?
                == (theta * qi * di + ri) / frac(qi * di + ri, 1);
        failures += usize::from(!ok);
    }
    Ok((
        failures == 0,
        format!("{failures}/50 cases violate an identity"),
    ))
}

fn c3() -> Outcome {
    let z1 = GroupSpec::lattice(1);
    let z2 = GroupSpec::lattice(2);
    let failures: usize = (0..100u64)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let rate = if i % 2 == 0 { 0.01 } else { 0.1 };
            let (spec, moduli) = if i < 50 {
                (&z1, vec![10_000u64])
            } else {
                (&z2, vec![100, 100])
            };
            let w = spec.ball(2)?;
            let sigma = torus(spec, &moduli, &w)?.perturb(rate, i)?;
            Ok(usize::from(
                !sigma.subgroup_consistency_defects(&w)?.bounds_hold(),
            ))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok((
        failures == 0,
        format!("{failures}/100 instances violate a mass bound"),
    ))
}

fn random_step(rng: &mut impl Rng) -> Result<StepFunction> {
    let m = rng.gen_range(1..8);
    StepFunction::new((0..m).map(|_| rng.gen_range(0.0..3.0)).collect())
}

fn c4() -> Outcome {
    let mut checked = 0usize;
    let mut failures = 0usize;
    let mut worst: f64 = 0.0;
    for (si, spec) in [
        GroupSpec::lattice(1),
        GroupSpec::lattice(2),
        GroupSpec::heisenberg(),
    ]
    .into_iter()
    .enumerate()
    {
        let w = spec.ball(2)?;
        let table = w.table(&spec);
        let e: Vec<Element> = spec.ball(1)?.elements().to_vec();
        let consistent: Vec<Pattern> = (0u64..1 << w.len())
            .into_par_iter()
            .filter_map(|code| {
                let bits: Vec<bool> = (0..w.len()).map(|i| code >> i & 1 == 1).collect();
                let y = Pattern::from_bits(&bits);
                subgroup_violation(&w, &table, &y).is_none().then_some(y)
            })
            .collect();
        let mut rng = stream(derive_seed(4, si as u64));
        for _ in 0..20 {
            let labels = e
                .iter()
                .map(|g| Ok((g.clone(), random_step(&mut rng)?)))
                .collect::<Result<Vec<_>>>()?;
            let bits: Vec<Element> = w
                .elements()
                .iter()
                .filter(|_| rng.gen_bool(0.3))
                .cloned()
                .collect();
            let f = CylinderFunction::new(labels, bits)?;
            let errs = consistent
                .par_iter()
                .map(|y| {
                    let a = phi_f(&spec, &w, y, &f)?;
                    let b = coset_product(&spec, &w, y, &f)?;
                    Ok((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
                })
                .collect::<Result<Vec<f64>>>()?;
            for r in errs {
                worst = worst.max(r);
                failures += usize::from(r > 1e-12);
                checked += 1;
            }
        }
    }
    Ok((
        failures == 0 && checked > 0,
        format!("{checked} pattern/family pairs, worst relative error {worst:.3e}"),
    ))
}

fn c5() -> Outcome {
    let t = Instant::now();
    let d = 10_000;
    let spec = GroupSpec::lattice(1);
    let w = spec.ball(3)?;
    let sigma = rotation(d, &w)?;
    let honest_irs = empirical_irs(&sigma, &w)?;
    let theta = IrsWindowSpec::from_measure(&spec, &honest_irs)?;
    let fam = standard_family(&spec, 16)?;
    let mut honest_worst: f64 = 0.0;
    for f in &fam {
        honest_worst = honest_worst.max((exact_mean(&sigma, f)? - mu_theta(f, &theta)?).abs());
    }
    let pert = sigma.perturb(0.01, 5)?;
    let tv = frac_to_f64(&tv_distance(&empirical_irs(&pert, &w)?, &honest_irs)?);
    let mut pert_ok = true;
    let mut ratio: f64 = 0.0;
    for f in &fam {
        let diff = (exact_mean(&pert, f)? - mu_theta(f, &theta)?).abs();
        let s = finite_scale_slack(&pert, f)?;
        let slack = s.value + s.phi_bound * tv + 1e-12;
        pert_ok &= diff <= slack;
        ratio = ratio.max(diff / slack);
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        honest_worst <= 1e-12 && pert_ok && secs < 30.0,
        format!(
            "honest max |J−μ| {honest_worst:.2e}; perturbed max diff/slack {ratio:.3}; {secs:.2}s"
        ),
    ))
}

fn c6() -> Outcome {
    let d = 1000;
    let spec = GroupSpec::lattice(1);
    let w = spec.ball(2)?;
    let sigma = rotation(d, &w)?;
    let fam = standard_family(&spec, 16)?;
    let samples = 1024;
    let mut within = 0;
    for t in 0..100u64 {
        let f = &fam[t as usize % fam.len()];
        let mc = mc_stats(&sigma, f, samples, derive_seed(6, t))?;
        let v = exact_variance(&sigma, f)?;
        within += usize::from(
            (mc.mean - exact_mean(&sigma, f)?).abs() <= 3.0 * (v / samples as f64).sqrt(),
        );
    }
    let z2 = GroupSpec::lattice(2);
    let w2 = z2.ball(2)?;
    let mut rng = stream(6);
    let mut bound_fail = 0;
    for i in 0..100u64 {
        let d = rng.gen_range(2..300);
        let s = ApproxHom::from_action(&z2, &ActionSpec::RandomGenerators { d, seed: i }, d, &w2)?;
        let mut labels = Vec::new();
        for g in z2.ball(1)?.elements() {
            if rng.gen_bool(0.6) {
                labels.push((g.clone(), random_step(&mut rng)?));
            }
        }
        let bits: Vec<Element> = z2
            .ball(1)?
            .elements()
            .iter()
            .filter(|_| rng.gen_bool(0.3))
            .cloned()
            .collect();
        let f = CylinderFunction::new(labels, bits)?;
        bound_fail += usize::from(exact_variance(&s, &f)? > variance_bound(d, &f));
    }
    let mut block_exact = true;
    for f in &fam {
        block_exact &= exact_variance(&sigma.block_sum(4)?, f)? * 4.0 == exact_variance(&sigma, f)?;
    }
    Ok((
        within >= 99 && bound_fail == 0 && block_exact,
        format!("{within}/100 within 3 sd; {bound_fail}/100 bound failures; block-sum quarter exact: {block_exact}"),
    ))
}

fn c7() -> Outcome {
    let t = Instant::now();
    let z1 = GroupSpec::lattice(1);
    let z2 = GroupSpec::lattice(2);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let schedules: [(&GroupSpec, Vec<Vec<u64>>); 2] = [
        (&z1, vec![vec![1000], vec![4000], vec![16_000]]),
        (&z2, vec![vec![10, 100], vec![20, 200], vec![40, 400]]),
    ];
    for (spec, sizes) in schedules {
        let w = spec.ball(2)?;
        let fam = standard_family(spec, 16)?;
        let vars = sizes
            .iter()
            .map(|m| {
                let s = torus(spec, m, &w)?;
                fam.iter()
                    .map(|f| exact_variance(&s, f))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for k in 0..2 {
            for (a, b) in vars[k].iter().zip(&vars[k + 1]) {
                if *b > 0.0 {
                    lo = lo.min(a / b);
                    hi = hi.max(a / b);
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        lo >= 3.8 && hi <= 4.2 && secs < 60.0,
        format!("ratios in [{lo:.4}, {hi:.4}]; {secs:.2}s"),
    ))
}

fn c8() -> Outcome {
    let d = 10_000;
    let spec = GroupSpec::lattice(1);
    let w = spec.ball(2)?;
    let sigma = rotation(d, &w)?;
    let fam = standard_family(&spec, 16)?;
    let total: f64 = fam
        .iter()
        .map(|f| exact_variance(&sigma, f))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    let tol = 10.0 * total.sqrt();
    let ok = (0..100u64)
        .into_par_iter()
        .map(|r| select_good_sample(&sigma, &fam, tol, 10, derive_seed(8, r)).is_ok())
        .filter(|&b| b)
        .count();
    Ok((
        ok >= 99,
        format!("{ok}/100 runs found a good sample (tol {tol:.3e})"),
    ))
}

fn c9() -> Outcome {
    let t = Instant::now();
    let d = 10_000;
    let spec = GroupSpec::lattice(1);
    let w = spec.ball(2)?;
    let sigma = rotation(d, &w)?;
    let fam = standard_family(&spec, 16)?;
    let total: f64 = fam
        .iter()
        .map(|f| exact_variance(&sigma, f))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    let good = select_good_sample(&sigma, &fam, 10.0 * total.sqrt(), 10, 9)?;
    let els: Vec<Element> = spec.ball(1)?.elements().to_vec();
    let atoms = atoms(w.elements(), w.elements(), 4)?;
    let family = close_family(&spec, &atoms, &els)?;
    let data = export_relation_data(&sigma, &good.labels, &family)?;
    let theta = IrsWindowSpec::from_measure(
        &spec,
        &empirical_irs(&rotation(d, &spec.ball(6)?)?, &spec.ball(6)?)?,
    )?;
    let tol = RelationTolerances {
        homomorphism: 0.0,
        intersection: 0.0,
        trace: 0.05,
        equivariance: 0.0,
    };
    let rep = full_report(&data, &atoms, &els, &theta, &tol)?;
    let secs = t.elapsed().as_secs_f64();
    let max = |k: &str| rep.max_of(k).unwrap_or(0.0);
    Ok((
        rep.pass
            && rep.closure_violations.is_empty()
            && max("intersection") == 0.0
            && max("equivariance") == 0.0
            && secs < 60.0,
        format!(
            "{} sets; intersection {}, equivariance {}, trace {:.4}; {secs:.2}s",
            family.len(),
            max("intersection"),
            max("equivariance"),
            max("trace")
        ),
    ))
}

fn c10() -> Outcome {
    // (a) two independently built n-cycles
    let d = 10_000;
    let order = random_permutation(d, 10);
    let cycle: Vec<usize> = order.images().iter().map(|&i| i as usize).collect();
    let p = Permutation::from_cycles(d, &[cycle])?;
    let pa = AlignmentProblem::from_images(
        vec![Permutation::rotation(d, 1)],
        vec![p],
        vec![],
        AlignParams::default(),
    )?;
    let a = align(&pa)?.objective;

    // (b) small random instances against exhaustive search
    let (mut matches, mut undercuts) = (0, 0);
    for t in 0..100u64 {
        let s = vec![
            random_permutation(6, derive_seed(100, t)),
            random_permutation(6, derive_seed(101, t)),
        ];
        let q = vec![
            random_permutation(6, derive_seed(102, t)),
            random_permutation(6, derive_seed(103, t)),
        ];
        let pr = AlignmentProblem::from_images(s, q, vec![], AlignParams::default())?;
        let bf = brute_force(&pr)?.objective;
        let al = align(&pr)?.objective;
        matches += usize::from(al == bf);
        undercuts += usize::from(al < bf);
    }

    // (c) torus vs embedding across sizes
    let spec = GroupSpec::lattice(2);
    let family: Vec<Vec<Element>> = subsets_up_to(&spec.ball(3)?, 1);
    let trend = conjugacy_trend(
        &[8, 16, 32],
        |n| {
            let w = spec.ball(3)?;
            let a = ApproxHom::from_action(
                &spec,
                &ActionSpec::Torus {
                    moduli: vec![n as u64, n as u64],
                },
                n * n,
                &w,
            )?;
            let b =
                ApproxHom::from_action(&spec, &ActionSpec::Embedding { n: n as u64 }, n * n, &w)?;
            Ok((a, b))
        },
        spec.generators(),
        &family,
        0.0,
        &AlignParams::default(),
    );
    let errors = trend.rows.iter().any(|r| r.error.is_some());
    let stats = trend
        .rows
        .iter()
        .all(|r| r.stats.as_ref().is_some_and(|s| s.pass));
    let objs: Vec<String> = trend
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.objective_value.unwrap_or(f64::NAN)))
        .collect();
    let pass = a == Frac::from(0)
        && matches >= 90
        && undercuts == 0
        && !errors
        && stats
        && trend.non_increasing;
    Ok((
        pass,
        format!(
            "(a) objective {a}; (b) {matches}/100 match, {undercuts} undercut; (c) stats {stats}, objectives [{}]",
            objs.join(", ")
        ),
    ))
}

fn c11() -> Outcome {
    let spec = GroupSpec::lattice(1);
    let w = spec.ball(2)?;
    let sigma = rotation(1000, &w)?;
    let padded = sigma.pad_trivial(500)?;
    let family: Vec<Vec<Element>> = vec![vec![z(1)], vec![z(2)], vec![z(-1)]];
    let rep = stats_match(&sigma, &padded, &family, 0.0)?;
    let third = frac(1, 3);
    let exact = rep.rows.iter().all(|r| r.difference == third);
    Ok((
        !rep.pass && exact,
        format!(
            "flagged: {}; differences all exactly 1/3: {exact}",
            !rep.pass
        ),
    ))
}
