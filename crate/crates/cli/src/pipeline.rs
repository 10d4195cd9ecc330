//! `run` and `describe`: stages over a size schedule.

use std::fmt::Write as _;
use std::time::Instant;

use soficlab_core::approx::all_pairs;
use soficlab_core::bernoulli::{
    equivariance_defect, exact_mean, exact_variance, export_relation_data, finite_scale_slack,
    mc_stats, mu_theta, phi_integral, pushforward, sample_labels, select_good_sample,
    variance_bound,
};
use soficlab_core::conjugacy::{align, AlignmentProblem};
use soficlab_core::irs::{empirical_irs, fixed_fraction, stats_match, subsets_up_to, tv_distance};
use soficlab_core::relation::{atoms, close_family, full_report, RelationTolerances};
use soficlab_core::{frac_to_f64, ApproxHom, Frac, GroupSpec, Window, DEGREE_CAP};

use crate::config::{ExperimentConfig, Pipeline, ThetaSource};
use crate::error::Result;
use crate::report::{Plot, RunReport, StageReport};

fn fr(x: &Frac) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

struct Built {
    name: String,
    sigma: ApproxHom,
    base: ApproxHom,
}

/// Runs every configured pipeline for every size; stage failures are recorded
/// and later stages still run.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let mut report = RunReport::new(serde_json::to_value(cfg)?);
    let spec = cfg.spec()?;
    let window = spec.ball(cfg.window_radius)?;
    let mut align_rows: Vec<(usize, Frac)> = Vec::new();

    for pipeline in &cfg.pipelines {
        if *pipeline == Pipeline::Suite {
            let t = Instant::now();
            let stage = suite_stage(&mut report);
            report.push_stage(stage, t.elapsed().as_secs_f64());
            continue;
        }
        for n in cfg.sizes() {
            let t = Instant::now();
            let size = (!cfg.sizes.is_empty()).then_some(n);
            let mut stage = StageReport::new(name(pipeline), size);
            let built = cfg
                .constructions
                .iter()
                .map(|c| {
                    c.build(&spec, n, &window).map(|(sigma, base)| Built {
                        name: c.name.clone(),
                        sigma,
                        base,
                    })
                })
                .collect::<Result<Vec<_>>>();
            let outcome = built.and_then(|built| {
                for c in built.iter().flat_map(|b| b.sigma.conventions()) {
                    if !stage.notes.contains(&c) {
                        stage.note(c);
                    }
                }
                match pipeline {
                    Pipeline::Irs => irs_stage(cfg, &window, &built, n, &mut report, &mut stage),
                    Pipeline::Defect => {
                        defect_stage(cfg, &window, &built, n, &mut report, &mut stage)
                    }
                    Pipeline::Bernoulli => {
                        bernoulli_stage(cfg, &spec, &window, &built[0], n, &mut report, &mut stage)
                    }
                    Pipeline::Relcheck => {
                        relcheck_stage(cfg, &spec, &window, &built[0], n, &mut report, &mut stage)
                    }
                    Pipeline::Align => align_stage(
                        cfg,
                        &spec,
                        &window,
                        &built,
                        n,
                        &mut report,
                        &mut stage,
                        &mut align_rows,
                    ),
                    Pipeline::Suite => unreachable!(),
                }
            });
            if let Err(e) = outcome {
                stage.fail(e);
            }
            report.push_stage(stage, t.elapsed().as_secs_f64());
        }
    }

    if align_rows.len() > 1 {
        let mut stage = StageReport::new("align-trend", None);
        let non_increasing = align_rows.windows(2).all(|w| w[1].1 <= w[0].1);
        stage.note(format!(
            "objective non-increasing across sizes: {non_increasing}"
        ));
        if !spec.is_amenable() {
            stage.note("non-amenable group: the trend carries no theoretical guarantee");
        }
        report.push_stage(stage, 0.0);
    }
    report.timing.total_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn name(p: &Pipeline) -> &'static str {
    match p {
        Pipeline::Irs => "irs",
        Pipeline::Defect => "defect",
        Pipeline::Bernoulli => "bernoulli",
        Pipeline::Relcheck => "relcheck",
        Pipeline::Align => "align",
        Pipeline::Suite => "suite",
    }
}

fn irs_stage(
    cfg: &ExperimentConfig,
    window: &Window,
    built: &[Built],
    n: usize,
    report: &mut RunReport,
    stage: &mut StageReport,
) -> Result<()> {
    let spec = built[0].sigma.spec();
    for b in built {
        let mu = empirical_irs(&b.sigma, window)?;
        let t = report.table(
            "irs_patterns",
            &[
                "construction",
                "size",
                "degree",
                "pattern",
                "mass",
                "mass_value",
            ],
        );
        for (y, m) in mu.entries() {
            t.push(vec![
                b.name.clone(),
                n.to_string(),
                b.sigma.degree().to_string(),
                y.to_string(),
                fr(m),
                frac_to_f64(m).to_string(),
            ]);
        }
        let t = report.table(
            "irs_fixed",
            &[
                "construction",
                "size",
                "degree",
                "element",
                "fixed_fraction",
            ],
        );
        for g in window.elements() {
            let f = fixed_fraction(&b.sigma, std::slice::from_ref(g))?;
            t.push(vec![
                b.name.clone(),
                n.to_string(),
                b.sigma.degree().to_string(),
                g.to_string(),
                fr(&f),
            ]);
        }
        let bad = mu.inconsistent_mass(spec);
        stage.note(format!(
            "{}: subgroup-inconsistent pattern mass {}",
            b.name,
            fr(&bad)
        ));
    }
    // truncation matters: compare at every radius up to the window's
    for r in 1..=window.radius().unwrap_or(1) {
        let family = subsets_up_to(&spec.ball(r)?, 2);
        for b in &built[1..] {
            let rep = stats_match(&built[0].sigma, &b.sigma, &family, cfg.tolerances.stats)?;
            let worst = rep
                .rows
                .iter()
                .map(|r| r.difference)
                .max()
                .unwrap_or_default();
            let t = report.table(
                "irs_stats",
                &[
                    "left",
                    "right",
                    "size",
                    "radius",
                    "set",
                    "left_fraction",
                    "right_fraction",
                    "difference",
                    "pass",
                ],
            );
            for row in &rep.rows {
                let set: Vec<String> = row.set.iter().map(|g| g.to_string()).collect();
                t.push(vec![
                    built[0].name.clone(),
                    b.name.clone(),
                    n.to_string(),
                    r.to_string(),
                    format!("{{{}}}", set.join(" ")),
                    fr(&row.sigma),
                    fr(&row.psi),
                    fr(&row.difference),
                    row.pass.to_string(),
                ]);
            }
            let name = format!("stats_match {} vs {} (radius {r})", built[0].name, b.name);
            stage.check(name, fr(&worst), cfg.tolerances.stats, rep.pass);
        }
    }
    Ok(())
}

fn defect_stage(
    cfg: &ExperimentConfig,
    window: &Window,
    built: &[Built],
    n: usize,
    report: &mut RunReport,
    stage: &mut StageReport,
) -> Result<()> {
    let pairs = all_pairs(window);
    for b in built {
        let rep = b.sigma.defect(&pairs)?;
        let t = report.table("defects", &["construction", "size", "g", "h", "defect"]);
        for e in &rep.entries {
            t.push(vec![
                b.name.clone(),
                n.to_string(),
                e.g.to_string(),
                e.h.to_string(),
                fr(&e.value),
            ]);
        }
        stage.check(
            format!("{}: max pair defect", b.name),
            fr(&rep.max),
            cfg.tolerances.defect,
            frac_to_f64(&rep.max) <= cfg.tolerances.defect,
        );
        stage.check(
            format!("{}: identity defect", b.name),
            fr(&rep.identity_defect),
            cfg.tolerances.defect,
            frac_to_f64(&rep.identity_defect) <= cfg.tolerances.defect,
        );

        let cons = b.sigma.subgroup_consistency_defects(window)?;
        let t = report.table(
            "violations",
            &["construction", "size", "kind", "g", "h", "mass", "bound"],
        );
        for v in &cons.products {
            t.push(vec![
                b.name.clone(),
                n.to_string(),
                "product".into(),
                v.g.to_string(),
                v.h.to_string(),
                fr(&v.mass),
                fr(&v.bound),
            ]);
        }
        for v in &cons.inverses {
            t.push(vec![
                b.name.clone(),
                n.to_string(),
                "inverse".into(),
                v.g.to_string(),
                String::new(),
                fr(&v.mass),
                fr(&v.bound),
            ]);
        }
        stage.check(
            format!("{}: violation masses within bounds", b.name),
            fr(&cons.total_mass()),
            "pointwise bounds",
            cons.bounds_hold(),
        );
    }
    Ok(())
}

/// Labels for the bernoulli and relation stages: a good sample when possible.
fn good_labels(
    cfg: &ExperimentConfig,
    sigma: &ApproxHom,
    fam: &[soficlab_core::CylinderFunction],
    stage: &mut StageReport,
) -> Result<soficlab_core::Labels> {
    let tol = match cfg.tolerances.good_sample {
        Some(t) => t,
        None => {
            let total: f64 = fam
                .iter()
                .map(|f| exact_variance(sigma, f))
                .collect::<soficlab_core::Result<Vec<_>>>()?
                .iter()
                .sum();
            cfg.tolerances.good_sample_factor * total.sqrt()
        }
    };
    if tol.is_nan() || tol <= 0.0 {
        stage.note("good-sample tolerance is zero (all variances vanish); using the first sample");
        return Ok(sample_labels(
            sigma.degree(),
            soficlab_core::rng::derive_seed(cfg.seeds.labels, 0),
        ));
    }
    let g = select_good_sample(sigma, fam, tol, cfg.max_tries, cfg.seeds.labels)?;
    stage.check(
        "good sample found",
        format!("{} tries, residual {}", g.tries, g.total_residual),
        tol,
        true,
    );
    stage.note(format!(
        "Chebyshev failure bound per try: {}",
        g.failure_bound
    ));
    if g.ties > 0 {
        stage.note(format!("{} tied label values detected", g.ties));
    }
    Ok(g.labels)
}

fn bernoulli_stage(
    cfg: &ExperimentConfig,
    spec: &GroupSpec,
    window: &Window,
    b: &Built,
    n: usize,
    report: &mut RunReport,
    stage: &mut StageReport,
) -> Result<()> {
    let sigma = &b.sigma;
    let fam = cfg.cylinders(spec)?;
    let theta = cfg.theta(spec, window, &b.base)?;
    let empirical = matches!(cfg.theta, ThetaSource::Empirical);
    // slack for comparing σ's mean with the IRS of its unperturbed base
    let tv = if empirical && !sigma.is_honest() {
        let own = empirical_irs(sigma, window)?;
        let base = empirical_irs(&b.base, window)?;
        Some((own.clone(), frac_to_f64(&tv_distance(&own, &base)?)))
    } else {
        None
    };
    let x = good_labels(cfg, sigma, &fam, stage)?;
    let d = sigma.degree();
    for (i, f) in fam.iter().enumerate() {
        let mean = exact_mean(sigma, f)?;
        let var = exact_variance(sigma, f)?;
        let bound = variance_bound(d, f);
        let mu = mu_theta(f, &theta)?;
        let slack = finite_scale_slack(sigma, f)?;
        let total_slack = match &tv {
            Some((own, tv)) => {
                // also compare against Φ_f integrated over σ's own patterns
                let own_int = phi_integral(spec, own, f)?;
                stage.check(
                    format!("f{i}: |J − ∫Φ_f dΘ_σ| ≤ slack"),
                    (mean - own_int).abs(),
                    slack.value + cfg.tolerances.oracle,
                    (mean - own_int).abs() <= slack.value + cfg.tolerances.oracle,
                );
                slack.value + slack.phi_bound * tv
            }
            None => slack.value,
        };
        let mc = mc_stats(sigma, f, cfg.samples, cfg.seeds.mc)?;
        let within = (mc.mean - mean).abs() <= 3.0 * (var / cfg.samples as f64).sqrt();
        let push = pushforward(sigma, &x, f)?;
        let mut eq_max: f64 = 0.0;
        let mut eq_holds = true;
        for g in spec.generators() {
            let e = equivariance_defect(sigma, &x, f, g)?;
            eq_max = eq_max.max(e.value);
            eq_holds &= e.holds;
        }
        let t = report.table(
            "bernoulli",
            &[
                "construction",
                "size",
                "degree",
                "f",
                "exact_mean",
                "mu_theta",
                "difference",
                "slack",
                "exact_variance",
                "variance_bound",
                "mc_mean",
                "mc_variance",
                "mc_radius",
                "mc_within_3sd",
                "pushforward",
                "equivariance_max",
            ],
        );
        t.push(vec![
            b.name.clone(),
            n.to_string(),
            d.to_string(),
            i.to_string(),
            mean.to_string(),
            mu.to_string(),
            (mean - mu).abs().to_string(),
            total_slack.to_string(),
            var.to_string(),
            bound.to_string(),
            mc.mean.to_string(),
            mc.variance.to_string(),
            mc.radius.to_string(),
            within.to_string(),
            push.to_string(),
            eq_max.to_string(),
        ]);
        stage.check(
            format!("f{i}: variance ≤ (2/d)|E|²C²"),
            var,
            bound,
            var <= bound,
        );
        if empirical {
            let tol = total_slack + cfg.tolerances.oracle;
            stage.check(
                format!("f{i}: |J − μ_Θ(f)| ≤ slack"),
                (mean - mu).abs(),
                tol,
                (mean - mu).abs() <= tol,
            );
        }
        stage.check(
            format!("f{i}: equivariance ≤ 2C·sqrt(u(M))"),
            eq_max,
            "bound",
            eq_holds,
        );
        if sigma.is_honest() {
            stage.check(
                format!("f{i}: equivariance"),
                eq_max,
                cfg.tolerances.equivariance,
                eq_max <= cfg.tolerances.equivariance,
            );
        }
    }
    stage.note(
        "mc_within_3sd is informational: a 3-sigma band fails with small probability by design",
    );
    report.plot(Plot {
        name: "bernoulli_variance".into(),
        table: "bernoulli".into(),
        x: "degree".into(),
        ys: vec!["exact_variance".into(), "mc_variance".into()],
        logscale: true,
        group_by: Some("f".into()),
    });
    Ok(())
}

fn relcheck_stage(
    cfg: &ExperimentConfig,
    spec: &GroupSpec,
    window: &Window,
    b: &Built,
    n: usize,
    report: &mut RunReport,
    stage: &mut StageReport,
) -> Result<()> {
    let sigma = &b.sigma;
    let fam = cfg.cylinders(spec)?;
    let x = good_labels(cfg, sigma, &fam, stage)?;
    let lw = spec.ball(cfg.label_radius)?;
    let elements: Vec<_> = spec.ball(1)?.elements().to_vec();
    let atoms = atoms(lw.elements(), lw.elements(), cfg.relation_bins)?;
    let family = close_family(spec, &atoms, &elements)?;
    let data = export_relation_data(sigma, &x, &family)?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    data.save(&dir.join(format!("relation_{}_{n}.bin", b.name)))?;
    let theta = cfg.theta(spec, window, &b.base)?;
    let tol = RelationTolerances {
        homomorphism: cfg.tolerances.defect,
        intersection: cfg.tolerances.intersection,
        trace: cfg.tolerances.trace,
        equivariance: cfg.tolerances.equivariance,
    };
    let rep = full_report(&data, &atoms, &elements, &theta, &tol)?;
    let t = report.table(
        "relation_checks",
        &[
            "construction",
            "size",
            "kind",
            "parameters",
            "value",
            "tolerance",
            "pass",
        ],
    );
    for r in &rep.rows {
        t.push(vec![
            b.name.clone(),
            n.to_string(),
            r.kind.clone(),
            r.parameters.clone(),
            r.value.to_string(),
            r.tolerance.to_string(),
            r.pass.to_string(),
        ]);
    }
    for (kind, tol) in [
        ("homomorphism", tol.homomorphism),
        ("intersection", tol.intersection),
        ("trace", tol.trace),
        ("equivariance", tol.equivariance),
    ] {
        if let Some(v) = rep.max_of(kind) {
            stage.check(format!("max {kind} defect"), v, tol, v <= tol);
        }
    }
    stage.check(
        "family closure violations",
        rep.closure_violations.len(),
        0,
        rep.closure_violations.is_empty(),
    );
    for v in &rep.closure_violations {
        stage.note(v.clone());
    }
    for w in rep.warnings.iter().chain(&rep.notes) {
        stage.note(w.clone());
    }
    stage.note(format!(
        "family of {} sets; relation data dumped",
        family.len()
    ));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn align_stage(
    cfg: &ExperimentConfig,
    spec: &GroupSpec,
    window: &Window,
    built: &[Built],
    n: usize,
    report: &mut RunReport,
    stage: &mut StageReport,
    trend: &mut Vec<(usize, Frac)>,
) -> Result<()> {
    let (s, p) = (&built[0], &built[1]);
    let family = subsets_up_to(window, 1);
    let stats = stats_match(&s.sigma, &p.sigma, &family, cfg.tolerances.stats)?;
    let worst = stats
        .rows
        .iter()
        .map(|r| r.difference)
        .max()
        .unwrap_or_default();
    stage.check(
        format!("stats_match {} vs {}", s.name, p.name),
        fr(&worst),
        cfg.tolerances.stats,
        stats.pass,
    );
    if s.sigma.degree() != p.sigma.degree() {
        stage.note("degrees differ: alignment skipped");
        return Ok(());
    }
    let res = align(&AlignmentProblem::new(
        &s.sigma,
        &p.sigma,
        spec.generators(),
        cfg.align_params(),
    )?)?;
    let tr = res.trace.as_ref().expect("align records a trace");
    let t = report.table(
        "align",
        &[
            "left",
            "right",
            "size",
            "degree",
            "stats_pass",
            "max_stats_difference",
            "objective",
            "objective_value",
            "best_start",
            "class_slack",
        ],
    );
    t.push(vec![
        s.name.clone(),
        p.name.clone(),
        n.to_string(),
        s.sigma.degree().to_string(),
        stats.pass.to_string(),
        fr(&worst),
        fr(&res.objective),
        frac_to_f64(&res.objective).to_string(),
        tr.starts[tr.best_start].start.clone(),
        tr.class_slack.to_string(),
    ]);
    if let Some(tol) = cfg.tolerances.alignment {
        let v = frac_to_f64(&res.objective);
        stage.check("alignment objective", v, tol, v <= tol);
    }
    if !spec.is_amenable() {
        stage.note("non-amenable group: alignment carries no theoretical guarantee");
    }
    trend.push((n, res.objective));
    report.plot(Plot {
        name: "align_objective".into(),
        table: "align".into(),
        x: "degree".into(),
        ys: vec!["objective_value".into()],
        logscale: false,
        group_by: None,
    });
    Ok(())
}

fn suite_stage(report: &mut RunReport) -> StageReport {
    let mut stage = StageReport::new("suite", None);
    let results = crate::suite::run_all();
    let t = report.table("acceptance", &["criterion", "name", "pass", "detail"]);
    for r in &results {
        t.push(vec![
            r.id.to_string(),
            r.name.clone(),
            r.pass.to_string(),
            r.detail.clone(),
        ]);
    }
    for r in results {
        stage.check(
            format!("criterion {}: {}", r.id, r.name),
            r.detail,
            "see criterion",
            r.pass,
        );
    }
    stage
}

/// Human-readable summary: windows, closure checks, sizes, cost estimates.
pub fn describe(cfg: &ExperimentConfig) -> Result<String> {
    let mut out = String::new();
    let spec = cfg.spec()?;
    let w = spec.ball(cfg.window_radius)?;
    let gens: Vec<String> = spec.generators().iter().map(|g| g.to_string()).collect();
    let _ = writeln!(out, "experiment: {}", cfg.name);
    let _ = writeln!(
        out,
        "group: {} (amenable: {}), generators {}",
        spec.name(),
        spec.is_amenable(),
        gens.join(" ")
    );
    let _ = writeln!(
        out,
        "window: ball of radius {} with {} elements",
        cfg.window_radius,
        w.len()
    );
    if cfg.pipelines.is_empty() {
        let _ = writeln!(out, "pipelines: none (summary only)");
    } else {
        let names: Vec<&str> = cfg.pipelines.iter().map(name).collect();
        let _ = writeln!(out, "pipelines: {}", names.join(", "));
    }
    let _ = writeln!(out, "output: {}", cfg.output_dir().display());
    let mut warnings = Vec::new();
    for c in &cfg.constructions {
        for n in cfg.sizes() {
            match c.degree(&spec, n) {
                Ok(d) => {
                    let mem =
                        d as f64 * (4.0 * (w.len() + 2 * spec.generators().len()) as f64 + 8.0);
                    let work = d as f64 * (w.len() * w.len()) as f64;
                    let _ = writeln!(
                        out,
                        "construction {} @ size {n}: degree {d}, ≈{:.1} MiB images+labels, ≈{:.2e} point-operations per defect sweep",
                        c.name,
                        mem / (1 << 20) as f64,
                        work
                    );
                    if d > DEGREE_CAP {
                        warnings.push(format!(
                            "construction {} @ size {n}: degree {d} exceeds the cap {DEGREE_CAP}",
                            c.name
                        ));
                    }
                }
                Err(e) => warnings.push(format!("construction {} @ size {n}: {e}", c.name)),
            }
        }
    }
    let gaps = cfg.closure_gaps(&spec, &w)?;
    if gaps.is_empty() {
        let _ = writeln!(out, "closure checks: pass");
    } else {
        for g in gaps {
            warnings.push(format!("closure: {g}"));
        }
    }
    if let Err(e) = cfg.validate() {
        warnings.push(e.to_string());
    }
    for w in &warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    Ok(out)
}
