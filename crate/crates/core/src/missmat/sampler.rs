//! Partially collapsed Gibbs sampler for the pooled and hierarchical models.
//!
//! Pooled: hyperparameters (a, rho, omega_P) are updated by random-walk
//! Metropolis on the beta-binomial / Dirichlet-multinomial marginal, then the
//! sensitivities and relative false negatives are drawn from their conjugate
//! conditionals.
//!
//! Hierarchical: countries are integrated out. The homogeneous rows, the
//! hyperparameters and omega_S / omega_R are updated by random-walk Metropolis
//! on unconstrained scales (logit, additive log-ratio, log). Hyperparameter
//! moves come in two flavours: plain, and shifted, where the homogeneous rows
//! are translated by the change of their prior centre on the unconstrained
//! scale (a volume-preserving map). Country matrices are then drawn from their
//! conjugate conditionals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{base_diag, base_q, diag_prior, fill_row, q_prior, FitConfig, Model, Priors};
use crate::dist::{
    alr, alr_inv, alr_ln_jacobian, beta_binomial_kernel, beta_ln_pdf, dirichlet_ln_pdf,
    dirichlet_multinomial_kernel, logit, sample_beta, sample_dirichlet, sample_standard_normal,
    sigmoid,
};
use crate::domain::{CauseSet, CountMatrix};
use crate::draws::{ParamDraws, PosteriorDraws};
use crate::error::{Error, Result};
use crate::posterior::diagnostics;

const ADAPT_EVERY: usize = 50;

#[derive(Debug, Clone)]
struct RowData {
    diag: u64,
    off: Vec<u64>,
    n: u64,
}

fn split_rows(d: &CountMatrix) -> Vec<RowData> {
    let c = d.dim();
    (0..c)
        .map(|i| {
            let off: Vec<u64> = (0..c).filter(|&j| j != i).map(|j| d.get(i, j)).collect();
            RowData {
                diag: d.get(i, i),
                n: d.row_total(i),
                off,
            }
        })
        .collect()
}

/// Random-walk scale tuned towards a target acceptance rate during warmup.
#[derive(Debug, Clone)]
struct Adapt {
    log_scale: f64,
    accepted: u32,
    proposed: u32,
    batches: u32,
    total_accepted: u64,
    total_proposed: u64,
}

impl Adapt {
    fn new(scale: f64) -> Self {
        Adapt {
            log_scale: scale.ln(),
            accepted: 0,
            proposed: 0,
            batches: 0,
            total_accepted: 0,
            total_proposed: 0,
        }
    }

    fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    fn record(&mut self, accepted: bool, retained: bool) {
        self.proposed += 1;
        self.accepted += accepted as u32;
        if retained {
            self.total_proposed += 1;
            self.total_accepted += accepted as u64;
        }
    }

    fn adapt(&mut self, target: f64) {
        if self.proposed == 0 {
            return;
        }
        self.batches += 1;
        let rate = self.accepted as f64 / self.proposed as f64;
        let step = (1.0 / (self.batches as f64).sqrt()).max(0.05);
        self.log_scale = (self.log_scale + 2.0 * step * (rate - target)).clamp(-12.0, 3.0);
        self.accepted = 0;
        self.proposed = 0;
    }

    fn rate(&self) -> f64 {
        if self.total_proposed == 0 {
            f64::NAN
        } else {
            self.total_accepted as f64 / self.total_proposed as f64
        }
    }
}

fn accept<R: Rng>(rng: &mut R, delta: f64) -> bool {
    if delta.is_nan() {
        return false;
    }
    delta >= 0.0 || rng.random::<f64>().ln() < delta
}

fn jitter<R: Rng>(rng: &mut R, x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v + s * sample_standard_normal(rng)).collect()
}

/// Hyperparameters on unconstrained scales plus their constrained values.
#[derive(Debug, Clone)]
struct Hyper {
    u: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    rho: Vec<f64>,
    omega: f64,
}

impl Hyper {
    fn new(u: Vec<f64>, v: Vec<f64>, omega: f64) -> Self {
        let a = u.iter().map(|x| sigmoid(*x)).collect();
        let rho = alr_inv(&v);
        Hyper { u, v, a, rho, omega }
    }

    fn centre_diag(&self) -> Vec<f64> {
        base_diag(&self.a, &self.rho)
    }

    fn centre_q(&self) -> Vec<Vec<f64>> {
        (0..self.rho.len()).map(|i| base_q(&self.rho, i)).collect()
    }
}

fn ln_accuracy_term(a: f64, priors: &Priors) -> f64 {
    let (b, d) = priors.accuracy;
    beta_ln_pdf(a, b, d) + a.ln() + (1.0 - a).ln()
}

fn ln_pull_term(rho: &[f64], pull: &[f64]) -> f64 {
    dirichlet_ln_pdf(rho, pull) + alr_ln_jacobian(rho)
}

/// Log prior of a free concentration on the log scale.
fn ln_omega_term(omega: f64, prior: &super::OmegaPrior) -> f64 {
    prior.ln_pdf(omega) + omega.ln()
}

fn init_hyper<R: Rng>(rng: &mut R, c: usize, priors: &Priors) -> Hyper {
    let u: Vec<f64> = (0..c).map(|_| logit(0.2 + 0.6 * rng.random::<f64>())).collect();
    let rho = sample_dirichlet(rng, &vec![5.0; c]);
    let omega = priors
        .omega_p
        .fixed_value()
        .unwrap_or_else(|| (0.5 * sample_standard_normal(rng)).exp());
    Hyper::new(u, alr(&rho), omega)
}

struct ChainOutput {
    values: BTreeMap<String, Vec<f64>>,
    acceptance: BTreeMap<String, f64>,
}

struct Recorder {
    values: BTreeMap<String, Vec<f64>>,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            values: BTreeMap::new(),
        }
    }

    fn push(&mut self, name: &str, v: &[f64]) {
        self.values.entry(name.to_string()).or_default().extend_from_slice(v);
    }
}

fn matrix_flat(diag: &[f64], q: &[Vec<f64>]) -> Vec<f64> {
    let c = diag.len();
    let mut out = vec![0.0; c * c];
    for i in 0..c {
        fill_row(&mut out[i * c..(i + 1) * c], i, diag[i], &q[i]);
    }
    out
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn run_pooled_chain(rows: &[RowData], cfg: &FitConfig, chain: usize) -> ChainOutput {
    let c = rows.len();
    let priors = &cfg.priors;
    let pull = priors.pull_scale(c);
    let omega_free = priors.omega_p.fixed_value().is_none();
    let mut rng = chain_rng(cfg.seed, chain);
    let mut h = init_hyper(&mut rng, c, priors);

    let diag_term = |i: usize, centre: f64, omega: f64| {
        let (al, be) = diag_prior(omega, centre);
        beta_binomial_kernel(rows[i].diag, rows[i].n - rows[i].diag, al, be)
    };
    let q_term = |i: usize, centre: &[f64], omega: f64| {
        dirichlet_multinomial_kernel(&rows[i].off, &q_prior(omega, centre))
    };
    let all_terms = |h: &Hyper| -> Vec<(f64, f64)> {
        let cd = h.centre_diag();
        let cq = h.centre_q();
        (0..c)
            .map(|i| (diag_term(i, cd[i], h.omega), q_term(i, &cq[i], h.omega)))
            .collect()
    };
    let mut terms = all_terms(&h);

    let mut ad_a: Vec<Adapt> = (0..c).map(|_| Adapt::new(0.5)).collect();
    let mut ad_rho = Adapt::new(0.3 / (c as f64).sqrt());
    let mut ad_omega = Adapt::new(0.5);
    let mut rec = Recorder::new();

    for it in 0..cfg.iterations {
        let retained = it >= cfg.warmup;
        for i in 0..c {
            let u_new = h.u[i] + ad_a[i].scale() * sample_standard_normal(&mut rng);
            let a_new = sigmoid(u_new);
            let centre = a_new + (1.0 - a_new) * h.rho[i];
            let t_new = diag_term(i, centre, h.omega);
            let delta = ln_accuracy_term(a_new, priors) - ln_accuracy_term(h.a[i], priors)
                + t_new
                - terms[i].0;
            let ok = accept(&mut rng, delta);
            if ok {
                h.u[i] = u_new;
                h.a[i] = a_new;
                terms[i].0 = t_new;
            }
            ad_a[i].record(ok, retained);
        }

        if c > 1 {
            let v_new = jitter(&mut rng, &h.v, ad_rho.scale());
            let cand = Hyper::new(h.u.clone(), v_new, h.omega);
            let t_new = all_terms(&cand);
            let delta = ln_pull_term(&cand.rho, &pull) - ln_pull_term(&h.rho, &pull)
                + t_new.iter().map(|(x, y)| x + y).sum::<f64>()
                - terms.iter().map(|(x, y)| x + y).sum::<f64>();
            let ok = accept(&mut rng, delta);
            if ok {
                h = cand;
                terms = t_new;
            }
            ad_rho.record(ok, retained);
        }

        if omega_free {
            let w_new = h.omega.ln() + ad_omega.scale() * sample_standard_normal(&mut rng);
            let mut cand = h.clone();
            cand.omega = w_new.exp();
            let t_new = all_terms(&cand);
            let delta = ln_omega_term(cand.omega, &priors.omega_p) - ln_omega_term(h.omega, &priors.omega_p)
                + t_new.iter().map(|(x, y)| x + y).sum::<f64>()
                - terms.iter().map(|(x, y)| x + y).sum::<f64>();
            let ok = accept(&mut rng, delta);
            if ok {
                h = cand;
                terms = t_new;
            }
            ad_omega.record(ok, retained);
        }

        if !retained && (it + 1) % ADAPT_EVERY == 0 {
            ad_a.iter_mut().for_each(|a| a.adapt(cfg.target_accept));
            ad_rho.adapt(cfg.target_accept);
            ad_omega.adapt(cfg.target_accept);
        }

        if retained {
            let cd = h.centre_diag();
            let cq = h.centre_q();
            let mut diag = Vec::with_capacity(c);
            let mut q = Vec::with_capacity(c);
            for i in 0..c {
                let (al, be) = diag_prior(h.omega, cd[i]);
                diag.push(sample_beta(&mut rng, al + rows[i].diag as f64, be + (rows[i].n - rows[i].diag) as f64));
                let alpha: Vec<f64> = q_prior(h.omega, &cq[i])
                    .iter()
                    .zip(&rows[i].off)
                    .map(|(a, t)| a + *t as f64)
                    .collect();
                q.push(sample_dirichlet(&mut rng, &alpha));
            }
            rec.push("a", &h.a);
            rec.push("rho", &h.rho);
            rec.push("omega_p", &[h.omega]);
            rec.push("phi", &matrix_flat(&diag, &q));
        }
    }

    let mut acceptance = BTreeMap::new();
    acceptance.insert("a".into(), ad_a.iter().map(|a| a.rate()).sum::<f64>() / c as f64);
    if c > 1 {
        acceptance.insert("rho".into(), ad_rho.rate());
    }
    if omega_free {
        acceptance.insert("omega_p".into(), ad_omega.rate());
    }
    ChainOutput {
        values: rec.values,
        acceptance,
    }
}

/// Homogeneous rows of the hierarchical model.
#[derive(Debug, Clone)]
struct Homog {
    x: Vec<f64>,
    y: Vec<Vec<f64>>,
    phi: Vec<f64>,
    q: Vec<Vec<f64>>,
}

impl Homog {
    fn new(x: Vec<f64>, y: Vec<Vec<f64>>) -> Self {
        let phi = x.iter().map(|v| sigmoid(*v)).collect();
        let q = y.iter().map(|v| alr_inv(v)).collect();
        Homog { x, y, phi, q }
    }
}

/// Cached log-density pieces of one homogeneous row.
#[derive(Debug, Clone, Copy, Default)]
struct RowTerms {
    /// Beta prior of the sensitivity, with the logit Jacobian.
    pd: f64,
    /// Dirichlet prior of the relative false negatives, with the ALR Jacobian.
    pq: f64,
    /// Country beta-binomial terms.
    kd: f64,
    /// Country Dirichlet-multinomial terms.
    kq: f64,
}

impl RowTerms {
    fn sum(&self) -> f64 {
        self.pd + self.pq + self.kd + self.kq
    }
}

struct HierData<'a> {
    /// `rows[i][s]`: row `i` of country `s`.
    rows: Vec<Vec<&'a RowData>>,
}

impl HierData<'_> {
    fn pd(&self, phi: f64, centre: f64, omega: f64) -> f64 {
        let (a, b) = diag_prior(omega, centre);
        beta_ln_pdf(phi, a, b) + phi.ln() + (1.0 - phi).ln()
    }

    fn pq(&self, q: &[f64], centre: &[f64], omega: f64) -> f64 {
        dirichlet_ln_pdf(q, &q_prior(omega, centre)) + alr_ln_jacobian(q)
    }

    fn kd(&self, i: usize, phi: f64, omega_s: f64) -> f64 {
        let (a, b) = diag_prior(omega_s, phi);
        self.rows[i]
            .iter()
            .map(|r| beta_binomial_kernel(r.diag, r.n - r.diag, a, b))
            .sum()
    }

    fn kq(&self, i: usize, q: &[f64], omega_r: f64) -> f64 {
        let alpha = q_prior(omega_r, q);
        self.rows[i]
            .iter()
            .map(|r| dirichlet_multinomial_kernel(&r.off, &alpha))
            .sum()
    }

    fn terms(&self, h: &Hyper, g: &Homog, omega_s: f64, omega_r: f64) -> Vec<RowTerms> {
        let cd = h.centre_diag();
        let cq = h.centre_q();
        (0..g.phi.len())
            .map(|i| RowTerms {
                pd: self.pd(g.phi[i], cd[i], h.omega),
                pq: self.pq(&g.q[i], &cq[i], h.omega),
                kd: self.kd(i, g.phi[i], omega_s),
                kq: self.kq(i, &g.q[i], omega_r),
            })
            .collect()
    }
}

fn total(terms: &[RowTerms]) -> f64 {
    terms.iter().map(RowTerms::sum).sum()
}

/// Translates the homogeneous rows by the change of the prior centre.
fn shifted(g: &Homog, old: &Hyper, new: &Hyper, rows: &[usize]) -> Homog {
    let (cd_old, cd_new) = (old.centre_diag(), new.centre_diag());
    let mut x = g.x.clone();
    let mut y = g.y.clone();
    for &i in rows {
        x[i] += logit(cd_new[i]) - logit(cd_old[i]);
        let (q_old, q_new) = (alr(&base_q(&old.rho, i)), alr(&base_q(&new.rho, i)));
        for k in 0..y[i].len() {
            y[i][k] += q_new[k] - q_old[k];
        }
    }
    Homog::new(x, y)
}

fn run_hier_chain(
    countries: &[(String, Vec<RowData>)],
    pooled: &[RowData],
    cfg: &FitConfig,
    chain: usize,
) -> ChainOutput {
    let c = pooled.len();
    let priors = &cfg.priors;
    let pull = priors.pull_scale(c);
    let omega_p_free = priors.omega_p.fixed_value().is_none();
    let omega_s_free = priors.omega_s.fixed_value().is_none();
    let omega_r_free = priors.omega_r.fixed_value().is_none() && c > 2;
    let data = HierData {
        rows: (0..c)
            .map(|i| countries.iter().map(|(_, r)| &r[i]).collect())
            .collect(),
    };
    let mut rng = chain_rng(cfg.seed, chain);
    let mut h = init_hyper(&mut rng, c, priors);
    let mut g = {
        let x = (0..c)
            .map(|i| {
                let r = &pooled[i];
                logit((r.diag as f64 + 1.0) / (r.n as f64 + 2.0)) + 0.3 * sample_standard_normal(&mut rng)
            })
            .collect();
        let y = (0..c)
            .map(|i| {
                let mut q: Vec<f64> = pooled[i].off.iter().map(|t| *t as f64 + 1.0).collect();
                let s: f64 = q.iter().sum();
                q.iter_mut().for_each(|v| *v /= s);
                jitter(&mut rng, &alr(&q), 0.3)
            })
            .collect();
        Homog::new(x, y)
    };
    let mut omega_s = priors
        .omega_s
        .fixed_value()
        .unwrap_or_else(|| (0.5 * sample_standard_normal(&mut rng)).exp());
    let mut omega_r = priors
        .omega_r
        .fixed_value()
        .unwrap_or_else(|| (0.5 * sample_standard_normal(&mut rng)).exp());
    let mut terms = data.terms(&h, &g, omega_s, omega_r);

    let mut ad_a: Vec<Adapt> = (0..c).map(|_| Adapt::new(0.5)).collect();
    let mut ad_a_shift: Vec<Adapt> = (0..c).map(|_| Adapt::new(0.5)).collect();
    let mut ad_rho = Adapt::new(0.3 / (c as f64).sqrt());
    let mut ad_rho_shift = Adapt::new(0.3 / (c as f64).sqrt());
    let mut ad_omega_p = Adapt::new(0.5);
    let mut ad_x: Vec<Adapt> = (0..c).map(|_| Adapt::new(0.3)).collect();
    let mut ad_y: Vec<Adapt> = (0..c).map(|_| Adapt::new(0.3 / (c as f64).sqrt())).collect();
    let mut ad_omega_s = Adapt::new(0.5);
    let mut ad_omega_r = Adapt::new(0.5);
    let mut rec = Recorder::new();
    let all_rows: Vec<usize> = (0..c).collect();

    for it in 0..cfg.iterations {
        let retained = it >= cfg.warmup;

        for i in 0..c {
            // Plain accuracy move.
            let u_new = h.u[i] + ad_a[i].scale() * sample_standard_normal(&mut rng);
            let a_new = sigmoid(u_new);
            let centre = a_new + (1.0 - a_new) * h.rho[i];
            let pd_new = data.pd(g.phi[i], centre, h.omega);
            let delta = ln_accuracy_term(a_new, priors) - ln_accuracy_term(h.a[i], priors) + pd_new - terms[i].pd;
            let ok = accept(&mut rng, delta);
            if ok {
                h.u[i] = u_new;
                h.a[i] = a_new;
                terms[i].pd = pd_new;
            }
            ad_a[i].record(ok, retained);

            // Accuracy move with the sensitivity shifted along.
            let mut u = h.u.clone();
            u[i] += ad_a_shift[i].scale() * sample_standard_normal(&mut rng);
            let cand = Hyper::new(u, h.v.clone(), h.omega);
            let cg = shifted(&g, &h, &cand, &[i]);
            let pd_new = data.pd(cg.phi[i], cand.centre_diag()[i], h.omega);
            let kd_new = data.kd(i, cg.phi[i], omega_s);
            let delta = ln_accuracy_term(cand.a[i], priors) - ln_accuracy_term(h.a[i], priors)
                + pd_new
                + kd_new
                - terms[i].pd
                - terms[i].kd;
            let ok = accept(&mut rng, delta);
            if ok {
                h = cand;
                g = cg;
                terms[i].pd = pd_new;
                terms[i].kd = kd_new;
            }
            ad_a_shift[i].record(ok, retained);
        }

        if c > 1 {
            let cand = Hyper::new(h.u.clone(), jitter(&mut rng, &h.v, ad_rho.scale()), h.omega);
            let t_new = data.terms(&cand, &g, omega_s, omega_r);
            let delta = ln_pull_term(&cand.rho, &pull) - ln_pull_term(&h.rho, &pull) + total(&t_new) - total(&terms);
            let ok = accept(&mut rng, delta);
            if ok {
                h = cand;
                terms = t_new;
            }
            ad_rho.record(ok, retained);

            let cand = Hyper::new(h.u.clone(), jitter(&mut rng, &h.v, ad_rho_shift.scale()), h.omega);
            let cg = shifted(&g, &h, &cand, &all_rows);
            let t_new = data.terms(&cand, &cg, omega_s, omega_r);
            let delta = ln_pull_term(&cand.rho, &pull) - ln_pull_term(&h.rho, &pull) + total(&t_new) - total(&terms);
            let ok = accept(&mut rng, delta);
            if ok {
                h = cand;
                g = cg;
                terms = t_new;
            }
            ad_rho_shift.record(ok, retained);
        }

        if omega_p_free {
            let mut cand = h.clone();
            cand.omega = (h.omega.ln() + ad_omega_p.scale() * sample_standard_normal(&mut rng)).exp();
            let cd = cand.centre_diag();
            let cq = cand.centre_q();
            let mut t_new = terms.clone();
            for i in 0..c {
                t_new[i].pd = data.pd(g.phi[i], cd[i], cand.omega);
                t_new[i].pq = data.pq(&g.q[i], &cq[i], cand.omega);
            }
            let delta = ln_omega_term(cand.omega, &priors.omega_p) - ln_omega_term(h.omega, &priors.omega_p)
                + total(&t_new)
                - total(&terms);
            let ok = accept(&mut rng, delta);
            if ok {
                h = cand;
                terms = t_new;
            }
            ad_omega_p.record(ok, retained);
        }

        let cd = h.centre_diag();
        let cq = h.centre_q();
        for i in 0..c {
            let x_new = g.x[i] + ad_x[i].scale() * sample_standard_normal(&mut rng);
            let phi_new = sigmoid(x_new);
            let pd_new = data.pd(phi_new, cd[i], h.omega);
            let kd_new = data.kd(i, phi_new, omega_s);
            let delta = pd_new + kd_new - terms[i].pd - terms[i].kd;
            let ok = accept(&mut rng, delta);
            if ok {
                g.x[i] = x_new;
                g.phi[i] = phi_new;
                terms[i].pd = pd_new;
                terms[i].kd = kd_new;
            }
            ad_x[i].record(ok, retained);

            if c > 2 {
                let y_new = jitter(&mut rng, &g.y[i], ad_y[i].scale());
                let q_new = alr_inv(&y_new);
                let pq_new = data.pq(&q_new, &cq[i], h.omega);
                let kq_new = data.kq(i, &q_new, omega_r);
                let delta = pq_new + kq_new - terms[i].pq - terms[i].kq;
                let ok = accept(&mut rng, delta);
                if ok {
                    g.y[i] = y_new;
                    g.q[i] = q_new;
                    terms[i].pq = pq_new;
                    terms[i].kq = kq_new;
                }
                ad_y[i].record(ok, retained);
            }
        }

        if omega_s_free {
            let w_new = (omega_s.ln() + ad_omega_s.scale() * sample_standard_normal(&mut rng)).exp();
            let kd_new: Vec<f64> = (0..c).map(|i| data.kd(i, g.phi[i], w_new)).collect();
            let delta = ln_omega_term(w_new, &priors.omega_s) - ln_omega_term(omega_s, &priors.omega_s)
                + kd_new.iter().sum::<f64>()
                - terms.iter().map(|t| t.kd).sum::<f64>();
            let ok = accept(&mut rng, delta);
            if ok {
                omega_s = w_new;
                terms.iter_mut().zip(kd_new).for_each(|(t, k)| t.kd = k);
            }
            ad_omega_s.record(ok, retained);
        }

        if omega_r_free {
            let w_new = (omega_r.ln() + ad_omega_r.scale() * sample_standard_normal(&mut rng)).exp();
            let kq_new: Vec<f64> = (0..c).map(|i| data.kq(i, &g.q[i], w_new)).collect();
            let delta = ln_omega_term(w_new, &priors.omega_r) - ln_omega_term(omega_r, &priors.omega_r)
                + kq_new.iter().sum::<f64>()
                - terms.iter().map(|t| t.kq).sum::<f64>();
            let ok = accept(&mut rng, delta);
            if ok {
                omega_r = w_new;
                terms.iter_mut().zip(kq_new).for_each(|(t, k)| t.kq = k);
            }
            ad_omega_r.record(ok, retained);
        } else if c == 2 && priors.omega_r.fixed_value().is_none() {
            // With two causes the relative false negatives are fixed at one and
            // omega_R does not enter the likelihood: draw it from its prior.
            omega_r = sample_omega_prior(&mut rng, &priors.omega_r);
        }

        if !retained && (it + 1) % ADAPT_EVERY == 0 {
            let t = cfg.target_accept;
            for ad in ad_a.iter_mut().chain(&mut ad_a_shift).chain(&mut ad_x).chain(&mut ad_y) {
                ad.adapt(t);
            }
            for ad in [&mut ad_rho, &mut ad_rho_shift, &mut ad_omega_p, &mut ad_omega_s, &mut ad_omega_r] {
                ad.adapt(t);
            }
        }

        if retained {
            rec.push("a", &h.a);
            rec.push("rho", &h.rho);
            rec.push("omega_p", &[h.omega]);
            rec.push("omega_s", &[omega_s]);
            rec.push("omega_r", &[omega_r]);
            rec.push("phi", &matrix_flat(&g.phi, &g.q));
            if cfg.keep_country_draws {
                for (name, rows) in countries {
                    let mut diag = Vec::with_capacity(c);
                    let mut q = Vec::with_capacity(c);
                    for i in 0..c {
                        let (al, be) = diag_prior(omega_s, g.phi[i]);
                        let r = &rows[i];
                        diag.push(sample_beta(&mut rng, al + r.diag as f64, be + (r.n - r.diag) as f64));
                        let alpha: Vec<f64> = q_prior(omega_r, &g.q[i])
                            .iter()
                            .zip(&r.off)
                            .map(|(a, t)| a + *t as f64)
                            .collect();
                        q.push(sample_dirichlet(&mut rng, &alpha));
                    }
                    rec.push(&country_param(name), &matrix_flat(&diag, &q));
                }
            }
        }
    }

    let mean_rate = |v: &[Adapt]| v.iter().map(|a| a.rate()).sum::<f64>() / v.len() as f64;
    let mut acceptance = BTreeMap::new();
    acceptance.insert("a".into(), mean_rate(&ad_a));
    acceptance.insert("a_shift".into(), mean_rate(&ad_a_shift));
    acceptance.insert("phi_diag".into(), mean_rate(&ad_x));
    if c > 1 {
        acceptance.insert("rho".into(), ad_rho.rate());
        acceptance.insert("rho_shift".into(), ad_rho_shift.rate());
    }
    if c > 2 {
        acceptance.insert("q".into(), mean_rate(&ad_y));
    }
    if omega_p_free {
        acceptance.insert("omega_p".into(), ad_omega_p.rate());
    }
    if omega_s_free {
        acceptance.insert("omega_s".into(), ad_omega_s.rate());
    }
    if omega_r_free {
        acceptance.insert("omega_r".into(), ad_omega_r.rate());
    }
    ChainOutput {
        values: rec.values,
        acceptance,
    }
}

fn sample_omega_prior<R: Rng>(rng: &mut R, prior: &super::OmegaPrior) -> f64 {
    match prior {
        super::OmegaPrior::Fixed { value } => *value,
        super::OmegaPrior::HalfCauchy { scale } => {
            let u: f64 = rng.random();
            scale * (std::f64::consts::FRAC_PI_2 * u).tan()
        }
    }
}

/// Name of the per-country matrix parameter in a draw archive.
pub(crate) fn country_param(country: &str) -> String {
    format!("phi_country:{country}")
}

/// Draws from the pooled or hierarchical posterior. Chains run in parallel
/// with independent streams of the seed. Convergence problems are reported in
/// the attached diagnostics and logged, not returned as errors.
pub fn sample_missmat_posterior(data: &[CountMatrix], model: Model, cfg: &FitConfig) -> Result<PosteriorDraws> {
    let first = data.first().ok_or_else(|| Error::input("no labeled data"))?;
    let causes: CauseSet = first.causes.clone();
    let c = causes.len();
    cfg.validate(c)?;
    super::check_data(data, c)?;
    let mut names = std::collections::HashSet::new();
    for d in data {
        if !names.insert(d.country.to_lowercase()) {
            return Err(Error::input(format!("country `{}` appears twice", d.country)));
        }
    }
    if data.iter().all(|d| d.total() == 0) {
        return Err(Error::input("labeled data contain no deaths"));
    }
    let pooled = CountMatrix::pooled(data)?;
    let pooled_rows = split_rows(&pooled);
    let countries: Vec<(String, Vec<RowData>)> = data.iter().map(|d| (d.country.clone(), split_rows(d))).collect();

    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|chain| match model {
            Model::Pooled => run_pooled_chain(&pooled_rows, cfg, chain),
            Model::Hierarchical => run_hier_chain(&countries, &pooled_rows, cfg, chain),
        })
        .collect();

    let retained = cfg.iterations - cfg.warmup;
    let mut draws = PosteriorDraws::new(cfg.seed, cfg.warmup, cfg.chains, retained);
    draws.causes = Some(causes);
    let shape_of = |name: &str| -> (Vec<usize>, bool) {
        match name {
            "a" => (vec![c], false),
            "rho" => (vec![c], true),
            "omega_p" | "omega_s" | "omega_r" => (vec![1], false),
            _ => (vec![c, c], true),
        }
    };
    for (chain, out) in outputs.iter().enumerate() {
        for (name, values) in &out.values {
            let p = draws.params.entry(name.clone()).or_insert_with(|| {
                let (shape, simplex) = shape_of(name);
                ParamDraws::new(shape, cfg.chains, simplex)
            });
            p.chains[chain] = values.clone();
        }
    }
    draws.metadata.insert(
        "model".into(),
        match model {
            Model::Pooled => "pooled",
            Model::Hierarchical => "hierarchical",
        }
        .into(),
    );
    draws.metadata.insert(
        "countries".into(),
        data.iter().map(|d| d.country.as_str()).collect::<Vec<_>>().join(","),
    );
    for (chain, out) in outputs.iter().enumerate() {
        for (block, rate) in &out.acceptance {
            draws
                .metadata
                .insert(format!("acceptance:{block}:chain{chain}"), format!("{rate:.3}"));
        }
    }
    draws.validate()?;
    if cfg.chains >= 2 && retained >= diagnostics::MIN_ITERATIONS {
        let diag = diagnostics::diagnostics(&draws)?;
        if !diag.converged {
            log::warn!(
                "misclassification fit flagged: max split R-hat {:.3}, min bulk ESS {:.0}",
                diag.max_rhat,
                diag.min_ess
            );
        }
        draws.diagnostics = Some(diag);
    } else {
        log::warn!("too few chains or iterations for convergence diagnostics");
    }
    Ok(draws)
}
