//! The experiment DAG: `solve -> zerotemp -> {mane, graph, ldp}`.
//!
//! Every stage reads its inputs from the output directory, so running the
//! stages one at a time and running `all` produce the same files.

use std::fs;

use rayon::prelude::*;
use serde_json::{json, Value};
use zerotemp_core::gibbs::{build_chain, entropy_penalized, mean_potential, variational_residual, GibbsChain};
use zerotemp_core::ldp::{assemble_report, inf_rate_over_cylinder, rate_row, RateReport};
use zerotemp_core::mane::{cost_matrices, default_omega_tol, max_triangle_violation, omega_set, separating_subaction};
use zerotemp_core::maximizer::{cohomology_residual, cycle_measure, graph_map, monotonicity_check, support_on_graph_check};
use zerotemp_core::potentials::{sample_on_grid, twist_report, TwistSign};
use zerotemp_core::transfer::{leading_eigenpair, spectral_gap_bound, EigenPair, DEFAULT_MAX_ITER};
use zerotemp_core::tropical::{
    beta_limit, calibrated_subaction, duality_certificate, karp_value, subaction_violation, BetaLimit, Direction,
    Eigenfunction, KarpValue,
};
use zerotemp_core::Grid;

use crate::artifacts::{
    beta_dir, cached_eigenpair, fmt_f64, read_subaction, write_eigenpair, write_subaction, KarpRecord, Manifest, OutDir,
};
use crate::config::{ExperimentConfig, Model};
use crate::error::{CliError, Context, Result};

const VALUE_ITERATION_TOL: f64 = 1e-13;
const VALUE_ITERATION_MAX: usize = 100_000;
const EIGEN_AGREEMENT_TOL: f64 = 1e-10;
const ROW_SUM_TOL: f64 = 1e-10;
const STATIONARITY_TOL: f64 = 1e-8;
const ENTROPY_SIGN_TOL: f64 = 1e-12;
const VARIATIONAL_TOL: f64 = 1e-8;
const DUALITY_TOL: f64 = 1e-7;
const MEAN_ABOVE_M_TOL: f64 = 1e-6;
const TRIANGLE_SAMPLES: usize = 100_000;
const TRIANGLE_TOL: f64 = 1e-9;
const OMEGA_MARGIN_TOL: f64 = 1e-6;
const COHOMOLOGY_TOL: f64 = 1e-7;
const MIN_DEFINED_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Solve,
    Zerotemp,
    Mane,
    Graph,
    Ldp,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Solve, Stage::Zerotemp, Stage::Mane, Stage::Graph, Stage::Ldp];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Zerotemp => "zerotemp",
            Stage::Mane => "mane",
            Stage::Graph => "graph",
            Stage::Ldp => "ldp",
        }
    }

    fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Solve => None,
            Stage::Zerotemp => Some(Stage::Solve),
            Stage::Mane | Stage::Graph | Stage::Ldp => Some(Stage::Zerotemp),
        }
    }
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    model: Model,
    grid: Grid,
    out: OutDir,
    manifest: Manifest,
}

impl Pipeline {
    /// Opens the output directory. Stage records from a different config are
    /// discarded; cached eigenpairs are kept and revalidated per `beta`.
    pub fn open(cfg: ExperimentConfig, out: OutDir) -> Result<Self> {
        let hash = cfg.hash();
        let manifest = match out.read_json::<Manifest>("manifest.json", "solve") {
            Ok(m) if m.config_hash == hash => m,
            _ => {
                let sections = out.path("sections");
                if sections.exists() {
                    fs::remove_dir_all(&sections).map_err(|source| CliError::Io { path: sections, source })?;
                }
                let m = Manifest {
                    config_hash: hash,
                    completed: Vec::new(),
                };
                out.write_json("manifest.json", &m)?;
                m
            }
        };
        let model = cfg.model();
        let grid = Grid::new(cfg.n).ctx("grid", "new")?;
        Ok(Pipeline {
            cfg,
            model,
            grid,
            out,
            manifest,
        })
    }

    pub fn is_done(&self, stage: Stage) -> bool {
        self.manifest.completed.iter().any(|s| s == stage.name())
    }

    /// Runs one stage unless its results are already on disk for this config.
    /// Returns `false` when the cached result was reused.
    pub fn run(&mut self, stage: Stage) -> Result<bool> {
        if self.is_done(stage) {
            self.write_summary()?;
            return Ok(false);
        }
        if let Some(pre) = stage.prerequisite() {
            if !self.is_done(pre) {
                return Err(CliError::MissingArtifact {
                    artifact: format!("{} results in {}", pre.name(), self.out.root().display()),
                    needs: pre.name(),
                });
            }
        }
        let section = match stage {
            Stage::Solve => self.solve()?,
            Stage::Zerotemp => self.zerotemp()?,
            Stage::Mane => self.mane()?,
            Stage::Graph => self.graph()?,
            Stage::Ldp => self.ldp()?,
        };
        self.out.write_json(&format!("sections/{}.json", stage.name()), &section)?;
        self.manifest.completed.push(stage.name().into());
        self.out.write_json("manifest.json", &self.manifest)?;
        self.write_summary()?;
        Ok(true)
    }

    /// The stages `all` runs, in order.
    pub fn planned(&self) -> Vec<Stage> {
        let f = &self.cfg.flags;
        Stage::ALL
            .into_iter()
            .filter(|s| match s {
                Stage::Solve | Stage::Zerotemp => true,
                Stage::Mane => f.run_mane,
                Stage::Graph => f.run_graph,
                Stage::Ldp => f.run_ldp,
            })
            .collect()
    }

    /// Rebuilds `summary.json` from the stage sections in a fixed order.
    fn write_summary(&self) -> Result<()> {
        let mut stages = serde_json::Map::new();
        for stage in Stage::ALL {
            if self.is_done(stage) {
                let v: Value = self.out.read_json(&format!("sections/{}.json", stage.name()), stage.name())?;
                stages.insert(stage.name().into(), v);
            }
        }
        let all_pass = stages.values().all(|s| s.get("pass").and_then(Value::as_bool).unwrap_or(true));
        let summary = json!({
            "config_hash": self.manifest.config_hash,
            "potential": self.model.name(),
            "n": self.cfg.n,
            "betas": self.cfg.betas,
            "stages": stages,
            "pass": all_pass,
        });
        self.out.write_json("summary.json", &summary)
    }

    fn karp(&self) -> Result<KarpValue> {
        let r: KarpRecord = self.out.read_json("karp.json", "solve")?;
        Ok(KarpValue {
            m: r.m,
            karp_formula: r.karp_formula,
            cycle: r.cycle,
        })
    }

    fn eigenpairs(&self) -> Result<Vec<EigenPair>> {
        self.cfg
            .betas
            .iter()
            .map(|&beta| {
                cached_eigenpair(&self.out, beta, &self.cfg.eigen_key(beta)).ok_or_else(|| {
                    CliError::MissingArtifact {
                        artifact: self.out.path(&beta_dir(beta)).display().to_string(),
                        needs: "solve",
                    }
                })
            })
            .collect()
    }

    fn solve(&self) -> Result<Value> {
        let a = &*self.model;
        let g = &self.grid;
        let x = g.nodes();
        let twist = twist_report(a, g);
        let kv = karp_value(a, g).ctx("tropical", "karp_value")?;
        let sub = |d| {
            calibrated_subaction(a, g, kv.m, d, VALUE_ITERATION_TOL, VALUE_ITERATION_MAX)
                .ctx("tropical", "calibrated_subaction")
        };
        let fwd = sub(Direction::Forward)?;
        let bwd = sub(Direction::Backward)?;
        let sup_a = sample_on_grid(a, g).iter().fold(0.0f64, |s, v| s.max(v.abs()));

        let per_beta: Vec<Result<(EigenPair, bool, GibbsChain, Value)>> = self
            .cfg
            .betas
            .par_iter()
            .map(|&beta| {
                let key = self.cfg.eigen_key(beta);
                let (ep, cached) = match cached_eigenpair(&self.out, beta, &key) {
                    Some(ep) => (ep, true),
                    None => (
                        leading_eigenpair(beta, a, g, self.cfg.tolerances.eigen_tol, DEFAULT_MAX_ITER)
                            .ctx("transfer_operator", "leading_eigenpair")?,
                        false,
                    ),
                };
                let c = build_chain(&ep, a, g).ctx("gibbs_chain", "build_chain")?;
                let r = c.residuals();
                let entropy = entropy_penalized(&c).ctx("gibbs_chain", "entropy_penalized")?;
                let variational = variational_residual(&c, &ep, a, g).ctx("gibbs_chain", "variational_identity")?;
                let positive = ep.phi.iter().chain(&ep.phi_bar).all(|&p| p > 0.0);
                let record = json!({
                    "beta": beta,
                    "lambda": ep.lambda,
                    "log_lambda": ep.log_lambda,
                    "log_lambda_backward": ep.log_lambda_backward,
                    "relative_eigen_gap": ep.eigenvalue_gap(),
                    "power_iterations": ep.iterations,
                    "power_residual": ep.residual,
                    "positive": positive,
                    "a_priori_bounds": ep.a_priori_bounds_hold(sup_a),
                    "spectral_gap_bound": spectral_gap_bound(&ep, a, g),
                    "row_stochasticity": r.row_stochasticity,
                    "normalization": r.normalization,
                    "stationarity": r.stationarity,
                    "entropy": entropy,
                    "mean_potential": mean_potential(&c, a, g),
                    "variational_residual": variational,
                });
                Ok((ep, cached, c, record))
            })
            .collect();

        self.out.write_json(
            "twist.json",
            &json!({
                "min_dxy": twist.min_dxy,
                "max_dxy": twist.max_dxy,
                "is_twist": twist.is_twist,
                "sign": sign_name(twist.sign),
            }),
        )?;
        self.out.write_json(
            "karp.json",
            &KarpRecord {
                m: kv.m,
                karp_formula: kv.karp_formula,
                cycle: kv.cycle.clone(),
                cycle_x: kv.cycle.iter().map(|&i| x[i]).collect(),
            },
        )?;
        write_subaction(&self.out, "subaction_forward", &fwd, x)?;
        write_subaction(&self.out, "subaction_backward", &bwd, x)?;

        let mut records = Vec::new();
        for item in per_beta {
            let (ep, cached, c, record) = item?;
            let dir = beta_dir(ep.beta);
            if !cached {
                write_eigenpair(&self.out, &ep, &self.cfg.eigen_key(ep.beta), x)?;
            }
            self.out.write_columns(&format!("{dir}/theta.csv"), &["x", "theta"], &[x, &c.theta])?;
            if self.cfg.flags.dump_kernel {
                let n = g.len();
                let rows = (0..n * n).map(|t| vec![(t / n).to_string(), (t % n).to_string(), fmt_f64(c.kernel[t])]);
                self.out.write_rows(&format!("{dir}/kernel.csv"), &["i", "j", "K"], rows)?;
            }
            self.out.write_json(&format!("{dir}/chain.json"), &record)?;
            records.push(record);
        }

        let all = |key: &str, ok: &dyn Fn(&Value) -> bool| records.iter().all(|r| ok(&r[key]));
        let below = |tol: f64| move |v: &Value| v.as_f64().is_some_and(|v| v <= tol);
        let is_true = |v: &Value| v.as_bool() == Some(true);
        let calib = self.cfg.tolerances.calib_tol;
        let checks = json!({
            "eigenvalues_agree": all("relative_eigen_gap", &below(EIGEN_AGREEMENT_TOL)),
            "eigenfunctions_positive": all("positive", &is_true),
            "a_priori_bounds": all("a_priori_bounds", &is_true),
            "row_stochastic": all("row_stochasticity", &below(ROW_SUM_TOL)),
            "stationary": all("stationarity", &below(STATIONARITY_TOL)),
            "entropy_nonpositive": all("entropy", &below(ENTROPY_SIGN_TOL)),
            "variational_identity": all("variational_residual", &below(VARIATIONAL_TOL)),
            "karp_formula_agrees": (kv.m - kv.karp_formula).abs() <= 1e-9,
            "forward_calibrated": fwd.residual <= calib,
            "backward_calibrated": bwd.residual <= calib,
        });
        Ok(json!({
            "twist": {"is_twist": twist.is_twist, "sign": sign_name(twist.sign), "min_dxy": twist.min_dxy, "max_dxy": twist.max_dxy},
            "m": kv.m,
            "karp_formula": kv.karp_formula,
            "cycle_x": kv.cycle.iter().map(|&i| x[i]).collect::<Vec<_>>(),
            "subactions": {
                "forward": {"kind": crate::artifacts::kind_name(fwd.kind), "residual": fwd.residual, "iterations": fwd.iterations},
                "backward": {"kind": crate::artifacts::kind_name(bwd.kind), "residual": bwd.residual, "iterations": bwd.iterations},
            },
            "betas": records,
            "pass": all_true(&checks),
            "checks": checks,
        }))
    }

    fn zerotemp(&self) -> Result<Value> {
        let a = &*self.model;
        let g = &self.grid;
        let x = g.nodes();
        let kv = self.karp()?;
        let fwd = read_subaction(&self.out, "subaction_forward", "solve")?;
        let bwd = read_subaction(&self.out, "subaction_backward", "solve")?;
        let eps = self.eigenpairs()?;
        let means: Vec<Result<f64>> = eps
            .par_iter()
            .map(|ep| Ok(mean_potential(&build_chain(ep, a, g).ctx("gibbs_chain", "build_chain")?, a, g)))
            .collect();
        let means = means.into_iter().collect::<Result<Vec<f64>>>()?;
        let gaps: Vec<f64> = means.iter().map(|mean| kv.m - mean).collect();
        let dual = duality_certificate(&bwd, a, g).ctx("tropical", "duality_certificate")?;

        let limit = |which, reference| -> Result<Option<BetaLimit>> {
            if eps.len() < 2 {
                return Ok(None);
            }
            beta_limit(&eps, which, Some(reference)).ctx("tropical", "beta_limit").map(Some)
        };
        let lf = limit(Eigenfunction::Forward, &fwd)?;
        let lb = limit(Eigenfunction::Backward, &bwd)?;
        let describe = |l: &Option<BetaLimit>| match l {
            Some(l) => json!({
                "consecutive": l.consecutive,
                "to_reference": l.to_reference,
                "decreasing": decreasing(&l.to_reference),
                "final_distance": l.to_reference.last(),
            }),
            None => Value::Null,
        };
        for (stem, l) in [("limit_forward", &lf), ("limit_backward", &lb)] {
            if let Some(l) = l {
                self.out.write_columns(&format!("{stem}.csv"), &["x", "value"], &[x, &l.limit])?;
            }
        }
        let limits = json!({"betas": self.cfg.betas, "forward": describe(&lf), "backward": describe(&lb)});
        self.out.write_json("beta_limit.json", &limits)?;
        self.out
            .write_json("duality.json", &json!({"dual_value": dual.dual_value, "gap": dual.gap, "m": kv.m}))?;

        let calib = self.cfg.tolerances.calib_tol;
        let checks = json!({
            "calibration": fwd.residual <= calib && bwd.residual <= calib,
            "duality": dual.gap.abs() <= DUALITY_TOL,
            "mean_below_m": gaps.iter().all(|&gap| gap >= -MEAN_ABOVE_M_TOL),
            "gaps_shrinking": decreasing(&gaps),
        });
        Ok(json!({
            "m": kv.m,
            "calibration_residual": {"forward": fwd.residual, "backward": bwd.residual},
            "duality": {"dual_value": dual.dual_value, "gap": dual.gap},
            "mean_potential": means,
            "mean_potential_gap": gaps,
            "limits": limits,
            "pass": all_true(&checks),
            "checks": checks,
        }))
    }

    fn omega_tol(&self) -> f64 {
        self.cfg
            .tolerances
            .omega_tol
            .unwrap_or_else(|| default_omega_tol(self.model.lip(), self.cfg.n))
    }

    fn mane(&self) -> Result<Value> {
        let a = &*self.model;
        let g = &self.grid;
        let x = g.nodes();
        let n = g.len();
        let kv = self.karp()?;
        let cm = cost_matrices(a, g, kv.m, 4 * n, 1e-12).ctx("mane", "cost_matrices")?;
        let tol = self.omega_tol();
        let omega = omega_set(&cm, tol).ctx("mane", "omega_set")?;
        let triangle = max_triangle_violation(&cm.s, TRIANGLE_SAMPLES, self.cfg.seed);
        let cycle_in_omega = kv.cycle.iter().all(|i| omega.binary_search(i).is_ok());
        let sep = separating_subaction(&cm, &omega, a, g, 0.0).ctx("mane", "separating_subaction")?;
        let violation = subaction_violation(&sep.subaction.values, Direction::Backward, a, g, kv.m);

        let rows = (0..n * n).map(|t| {
            let (i, j) = (t / n, t % n);
            vec![i.to_string(), j.to_string(), fmt_f64(cm.s.get(i, j)), fmt_f64(cm.h.get(i, j))]
        });
        self.out.write_rows("cost.csv", &["i", "j", "S", "h"], rows)?;
        let omega_x: Vec<f64> = omega.iter().map(|&i| x[i]).collect();
        self.out.write_json("omega.json", &omega_x)?;
        self.out.write_columns("margins.csv", &["x", "margin"], &[x, &sep.margins])?;
        write_subaction(&self.out, "separating", &sep.subaction, x)?;

        let mut inside = vec![false; n];
        for &i in &omega {
            inside[i] = true;
        }
        let min_outside = (0..n).filter(|&i| !inside[i]).map(|i| sep.margins[i]).reduce(f64::min);
        let max_inside = omega.iter().map(|&i| sep.margins[i]).fold(f64::NEG_INFINITY, f64::max);
        let checks = json!({
            "triangle_inequality": triangle <= TRIANGLE_TOL,
            "cycle_in_omega": cycle_in_omega,
            "separating": min_outside.is_none_or(|m| m > 0.0) && max_inside <= OMEGA_MARGIN_TOL,
            "separating_is_subaction": violation <= 1e-9,
        });
        Ok(json!({
            "k_used": cm.k_used,
            "h_converged": cm.h_converged,
            "omega_tol": tol,
            "omega_size": omega.len(),
            "omega_x": omega_x,
            "triangle_samples": TRIANGLE_SAMPLES,
            "triangle_violation": triangle,
            "separating": {
                "min_margin_outside": min_outside,
                "max_margin_inside": max_inside,
                "subaction_violation": violation,
            },
            "pass": all_true(&checks),
            "checks": checks,
        }))
    }

    fn graph(&self) -> Result<Value> {
        let a = &*self.model;
        let g = &self.grid;
        let x = g.nodes();
        let n = g.len();
        let twist = twist_report(a, g);
        if !twist.is_twist {
            return Ok(json!({"applicable": false, "reason": "potential does not satisfy the twist condition"}));
        }
        let kv = self.karp()?;
        let bwd = read_subaction(&self.out, "subaction_backward", "solve")?;
        let gm = graph_map(&bwd, a, g).ctx("maximizer", "graph_map")?;
        let mono = monotonicity_check(&gm);
        let sm = cycle_measure(&kv);
        let support = support_on_graph_check(&sm, &gm);
        let cohomology = cohomology_residual(&sm, &bwd, a, g);
        let integral = sm.integral(a, g);

        let rows = (0..n).map(|i| vec![fmt_f64(x[i]), fmt_f64(x[gm.y[i]]), u8::from(gm.defined[i]).to_string()]);
        self.out.write_rows("graph.csv", &["x", "Y", "defined"], rows)?;
        let pairs: Vec<[f64; 3]> = sm.pairs.iter().map(|&(i, j, w)| [x[i], x[j], w]).collect();
        self.out.write_json("support.json", &json!({"pairs": pairs, "source": "karp-cycle"}))?;

        let fraction = gm.defined_count() as f64 / n as f64;
        let pair_x = |v: &[(usize, usize)]| v.iter().map(|&(i, j)| [x[i], x[j]]).collect::<Vec<_>>();
        let checks = json!({
            "defined_fraction": fraction >= MIN_DEFINED_FRACTION,
            "monotone": mono.ok,
            "support_on_graph": support.ok,
            "cohomology": cohomology <= COHOMOLOGY_TOL,
            "equal_marginals": sm.marginal_defect(n) <= 1e-12,
            "integral_is_m": (integral - kv.m).abs() <= 1e-9,
        });
        Ok(json!({
            "applicable": true,
            "sign": sign_name(gm.sign),
            "cross_tol": gm.cross_tol,
            "defined_count": gm.defined_count(),
            "defined_fraction": fraction,
            "monotonicity_violations": pair_x(&mono.violations),
            "off_graph_pairs": pair_x(&support.off_graph_pairs),
            "cohomology_residual": cohomology,
            "measure_integral": integral,
            "pass": all_true(&checks),
            "checks": checks,
        }))
    }

    fn omega_size(&self) -> Result<usize> {
        if self.is_done(Stage::Mane) {
            let omega: Vec<f64> = self.out.read_json("omega.json", "mane")?;
            return Ok(omega.len());
        }
        let kv = self.karp()?;
        let cm = cost_matrices(&*self.model, &self.grid, kv.m, 4 * self.cfg.n, 1e-12).ctx("mane", "cost_matrices")?;
        Ok(omega_set(&cm, self.omega_tol()).ctx("mane", "omega_set")?.len())
    }

    fn ldp(&self) -> Result<Value> {
        let a = &*self.model;
        let g = &self.grid;
        let x = g.nodes();
        let fwd = read_subaction(&self.out, "subaction_forward", "solve")?;
        let bwd = read_subaction(&self.out, "subaction_backward", "solve")?;
        // uniqueness of the maximizing measure is a hypothesis of the rate limit
        let unverified = self.omega_size()? > 1;
        let eps = self.eigenpairs()?;
        let chains: Vec<Result<GibbsChain>> = eps
            .par_iter()
            .map(|ep| build_chain(ep, a, g).ctx("gibbs_chain", "build_chain"))
            .collect();
        let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;

        let mut records = Vec::new();
        for k in 0..self.cfg.cylinders.len() {
            let cyl = self.cfg.cylinder_intervals(k);
            let inf = inf_rate_over_cylinder(&cyl, &fwd, &bwd, a, g).ctx("ldp", "inf_rate_over_cylinder")?;
            let rows = chains
                .iter()
                .map(|c| rate_row(c, g, &cyl, inf.value).ctx("ldp", "ldp_table"))
                .collect::<Result<Vec<_>>>()?;
            let report = assemble_report(&cyl, &inf, rows);
            let record = report_json(&report, inf.value, x, unverified);
            self.out.write_json(&format!("ldp_{k}.json"), &record)?;
            let mut dat = String::from("# beta value target\n");
            for r in &report.rows {
                dat.push_str(&format!("{} {} {}\n", fmt_f64(r.beta), fmt_f64(r.log_measure_over_beta), fmt_f64(report.f_inf)));
            }
            self.out.write_text(&format!("ldp_{k}.dat"), &dat)?;
            records.push(record);
        }
        Ok(json!({
            "hypotheses_unverified": unverified,
            "cylinders": records,
        }))
    }
}

fn report_json(r: &RateReport, inf_rate: f64, x: &[f64], unverified: bool) -> Value {
    json!({
        "cylinder": r.cylinder.iter().map(|&(lo, hi)| [lo, hi]).collect::<Vec<_>>(),
        "inf_rate": inf_rate,
        "f_inf": r.f_inf,
        "argmin_x": r.argmin.iter().map(|&i| x[i]).collect::<Vec<_>>(),
        "rows": r.rows.iter().map(|row| json!({
            "beta": row.beta,
            "log_measure_over_beta": row.log_measure_over_beta,
            "error": row.error,
        })).collect::<Vec<_>>(),
        "converged": r.converged,
        "hypotheses_unverified": unverified,
    })
}

fn sign_name(s: TwistSign) -> &'static str {
    match s {
        TwistSign::Positive => "positive",
        TwistSign::Negative => "negative",
        TwistSign::None => "none",
    }
}

/// Non-increasing up to rounding.
fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

fn all_true(checks: &Value) -> bool {
    checks
        .as_object()
        .is_some_and(|m| m.values().all(|v| v.as_bool() == Some(true)))
}
