//! Coverage demand estimation.
//!
//! The estimating equation regresses an insurance indicator (scaled to
//! 0/100 so coefficients read as percentage points) on the post-subsidy
//! premium, its interactions with standardized %FPL and an over-200%
//! indicator, and demographics, absorbing rating-area-by-year fixed
//! effects. Premium terms are endogenous; the instruments are the same
//! terms built from the counterfactual regime's premium, which moves with
//! the subsidy schedule but not with unobserved taste for coverage within
//! a market cell.
//!
//! Fixed effects are absorbed by weighted within-group demeaning, which
//! yields coefficients identical to explicit group dummies. Standard
//! errors cluster on the health insurance unit by default; a
//! heteroskedasticity-robust variant is available and coincides with
//! clustering when every cluster is a single row. Degrees of freedom count
//! the absorbed group means as estimated parameters.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Person;
use crate::premium::SubsidyQuote;

pub const N_COEF: usize = 6;
pub const N_ENDOG: usize = 3;
pub const COEF_NAMES: [&str; N_COEF] = [
    "premium",
    "premium_fplz",
    "premium_gt200",
    "female",
    "age",
    "fplz",
];
pub const INSTRUMENT_NAMES: [&str; N_ENDOG] =
    ["cf_premium", "cf_premium_fplz", "cf_premium_gt200"];

/// Threshold for the over-threshold premium interaction, %FPL. Strictly
/// greater-than: a person at exactly the threshold is below it.
pub const FPL_THRESHOLD: f64 = 200.0;

/// Regression-ready rows. Columns of `x`: premium, premium x FPLz,
/// premium x over-200, female, age, FPLz. `z` swaps the three premium
/// columns for their counterfactual versions.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub person_id: Vec<String>,
    pub y: Vec<f64>,
    pub x: Vec<[f64; N_COEF]>,
    pub z: Vec<[f64; N_COEF]>,
    pub w: Vec<f64>,
    pub fe: Vec<usize>,
    pub fe_keys: Vec<(u32, u16)>,
    pub cluster: Vec<usize>,
    pub n_clusters: usize,
    pub fpl: Vec<f64>,
    pub premium: Vec<f64>,
    /// Weighted mean and SD of %FPL used for the FPLz standardization.
    pub norm_mean: f64,
    pub norm_sd: f64,
    /// Persons dropped because a quote was missing under either regime.
    pub excluded: usize,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Assemble the design from persons and their quotes under both regimes.
/// Persons without a quote on either side are dropped and counted.
pub fn build_design(
    persons: &[Person],
    actual: &BTreeMap<String, SubsidyQuote>,
    counterfactual: &BTreeMap<String, SubsidyQuote>,
) -> Result<DesignMatrix> {
    let mut rows: Vec<(&Person, f64, f64)> = Vec::with_capacity(persons.len());
    let mut excluded = 0usize;
    for p in persons {
        match (actual.get(&p.person_id), counterfactual.get(&p.person_id)) {
            (Some(qa), Some(qc)) => {
                rows.push((p, qa.post_subsidy_premium, qc.post_subsidy_premium))
            }
            _ => excluded += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("design has no usable rows".into()));
    }

    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sxx = 0.0;
    for (p, _, _) in &rows {
        sw += p.weight;
        sx += p.weight * p.fpl;
        sxx += p.weight * p.fpl * p.fpl;
    }
    if !(sw > 0.0) {
        return Err(Error::Data("design weights sum to zero".into()));
    }
    let norm_mean = sx / sw;
    let norm_sd = (sxx / sw - norm_mean * norm_mean).max(0.0).sqrt();
    if !(norm_sd > 0.0) {
        return Err(Error::Data("%FPL has zero variance; cannot standardize".into()));
    }

    let mut fe_index: BTreeMap<(u32, u16), usize> = BTreeMap::new();
    let mut cluster_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (p, _, _) in &rows {
        let next = fe_index.len();
        fe_index.entry((p.rating_area, p.year)).or_insert(next);
        let next = cluster_index.len();
        cluster_index.entry(p.hiu_id.as_str()).or_insert(next);
    }
    let fe_keys: Vec<(u32, u16)> = fe_index.keys().copied().collect();
    // BTreeMap insertion above assigned ids in first-seen order; re-number
    // both maps by sorted key so group ids are stable under row order.
    let fe_index: BTreeMap<(u32, u16), usize> = fe_keys
        .iter()
        .enumerate()
        .map(|(i, k)| (*k, i))
        .collect();
    let cluster_ids: Vec<&str> = cluster_index.keys().copied().collect();
    let cluster_index: BTreeMap<&str, usize> = cluster_ids
        .iter()
        .enumerate()
        .map(|(i, k)| (*k, i))
        .collect();

    let n = rows.len();
    let mut d = DesignMatrix {
        person_id: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        fe: Vec::with_capacity(n),
        fe_keys,
        cluster: Vec::with_capacity(n),
        n_clusters: cluster_index.len(),
        fpl: Vec::with_capacity(n),
        premium: Vec::with_capacity(n),
        norm_mean,
        norm_sd,
        excluded,
    };
    for (p, pa, pc) in rows {
        let fplz = (p.fpl - norm_mean) / norm_sd;
        let gt200 = if p.fpl > FPL_THRESHOLD { 1.0 } else { 0.0 };
        let female = if p.female { 1.0 } else { 0.0 };
        let age = f64::from(p.age);
        d.person_id.push(p.person_id.clone());
        d.y.push(if p.insured { 100.0 } else { 0.0 });
        d.x.push([pa, pa * fplz, pa * gt200, female, age, fplz]);
        d.z.push([pc, pc * fplz, pc * gt200, female, age, fplz]);
        d.w.push(p.weight);
        d.fe.push(fe_index[&(p.rating_area, p.year)]);
        d.cluster.push(cluster_index[p.hiu_id.as_str()]);
        d.fpl.push(p.fpl);
        d.premium.push(pa);
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ols,
    #[serde(rename = "2sls")]
    TwoSls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcovKind {
    /// Cluster on the health insurance unit.
    ClusterHiu,
    /// Heteroskedasticity-robust without clustering.
    Hc1,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstStage {
    pub endogenous: String,
    pub instrument_names: Vec<String>,
    pub instrument_coefs: Vec<f64>,
    pub instrument_ses: Vec<f64>,
    /// Joint significance of the excluded instruments, cluster-robust.
    pub f_statistic: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedEffect {
    pub rating_area: u32,
    pub year: u16,
    pub estimate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandFit {
    pub method: Method,
    pub coef_names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    pub fixed_effects: Vec<FixedEffect>,
    pub first_stage: Vec<FirstStage>,
    pub norm_mean: f64,
    pub norm_sd: f64,
    pub n: usize,
    pub n_clusters: usize,
    /// Linear coefficients plus absorbed group means.
    pub k_params: usize,
    pub excluded: usize,
}

impl DemandFit {
    /// Coverage-probability change, in percentage points, for a one dollar
    /// premium increase at the given standardized %FPL and threshold side.
    pub fn marginal_effect_at(&self, fplz: f64, gt200: bool) -> f64 {
        self.beta[0] + self.beta[1] * fplz + self.beta[2] * if gt200 { 1.0 } else { 0.0 }
    }

    pub fn marginal_effect_at_fpl(&self, fpl: f64) -> f64 {
        self.marginal_effect_at((fpl - self.norm_mean) / self.norm_sd, fpl > FPL_THRESHOLD)
    }
}

pub fn fit_ols(design: &DesignMatrix) -> Result<DemandFit> {
    fit(design, Method::Ols, VcovKind::ClusterHiu)
}

pub fn fit_2sls(design: &DesignMatrix) -> Result<DemandFit> {
    fit(design, Method::TwoSls, VcovKind::ClusterHiu)
}

struct Demeaned {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    y: DVector<f64>,
    n_fe_active: usize,
}

/// Weighted within-group demeaning of y, x, and z.
fn demean(design: &DesignMatrix) -> Result<Demeaned> {
    let n = design.n();
    let groups = design.fe_keys.len();
    let mut wsum = vec![0.0f64; groups];
    let mut ysum = vec![0.0f64; groups];
    let mut xsum = vec![[0.0f64; N_COEF]; groups];
    let mut zsum = vec![[0.0f64; N_COEF]; groups];
    for i in 0..n {
        let g = design.fe[i];
        let w = design.w[i];
        wsum[g] += w;
        ysum[g] += w * design.y[i];
        for c in 0..N_COEF {
            xsum[g][c] += w * design.x[i][c];
            zsum[g][c] += w * design.z[i][c];
        }
    }
    let total_w: f64 = wsum.iter().sum();
    if !(total_w > 0.0) {
        return Err(Error::Data("design weights sum don't support a fit".into()));
    }
    let n_fe_active = wsum.iter().filter(|&&w| w > 0.0).count();

    let mut x = DMatrix::zeros(n, N_COEF);
    let mut z = DMatrix::zeros(n, N_COEF);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let g = design.fe[i];
        if wsum[g] <= 0.0 {
            continue;
        }
        y[i] = design.y[i] - ysum[g] / wsum[g];
        for c in 0..N_COEF {
            x[(i, c)] = design.x[i][c] - xsum[g][c] / wsum[g];
            z[(i, c)] = design.z[i][c] - zsum[g][c] / wsum[g];
        }
    }
    Ok(Demeaned { x, z, y, n_fe_active })
}

fn weighted_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let (ka, kb) = (a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(ka, kb);
    for i in 0..a.nrows() {
        let wi = w[i];
        for r in 0..ka {
            let ar = wi * a[(i, r)];
            for c in 0..kb {
                out[(r, c)] += ar * b[(i, c)];
            }
        }
    }
    out
}

fn weighted_cross_vec(a: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> DVector<f64> {
    let k = a.ncols();
    let mut out = DVector::zeros(k);
    for i in 0..a.nrows() {
        let wy = w[i] * y[i];
        for r in 0..k {
            out[r] += a[(i, r)] * wy;
        }
    }
    out
}

fn chol_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerics(format!("{what} is rank deficient")))
}

/// Cluster-robust or HC sandwich. `bread` is the inverted moment matrix,
/// `scores` holds w_i * u_i * x̂_i rows.
fn sandwich(
    bread: &DMatrix<f64>,
    scores: &DMatrix<f64>,
    cluster: &[usize],
    n_clusters: usize,
    kind: VcovKind,
    n: usize,
    k_params: usize,
) -> Result<DMatrix<f64>> {
    let kc = scores.ncols();
    if n <= k_params {
        return Err(Error::Numerics(format!(
            "{n} rows cannot identify {k_params} parameters"
        )));
    }
    let (meat, correction) = match kind {
        VcovKind::ClusterHiu => {
            if n_clusters < 2 {
                return Err(Error::Data(
                    "cluster-robust errors need at least two clusters".into(),
                ));
            }
            let mut sums = DMatrix::zeros(n_clusters, kc);
            for i in 0..n {
                let g = cluster[i];
                for c in 0..kc {
                    sums[(g, c)] += scores[(i, c)];
                }
            }
            let meat = sums.transpose() * &sums;
            let g = n_clusters as f64;
            let nf = n as f64;
            let kf = k_params as f64;
            (meat, g / (g - 1.0) * (nf - 1.0) / (nf - kf))
        }
        VcovKind::Hc1 => {
            let meat = scores.transpose() * scores;
            let nf = n as f64;
            (meat, nf / (nf - k_params as f64))
        }
    };
    Ok(bread * meat * bread * correction)
}

pub fn fit(design: &DesignMatrix, method: Method, vcov_kind: VcovKind) -> Result<DemandFit> {
    let n = design.n();
    let dm = demean(design)?;
    let w = &design.w;
    let k_params = N_COEF + dm.n_fe_active;

    let (xhat, first_stage) = match method {
        Method::Ols => (dm.x.clone(), Vec::new()),
        Method::TwoSls => {
            let a_zz = weighted_cross(&dm.z, &dm.z, w);
            let a_zz_inv = chol_inverse(&a_zz, "instrument moment matrix")?;
            let a_zx = weighted_cross(&dm.z, &dm.x, w);
            let coefs = &a_zz_inv * &a_zx;
            let xhat = &dm.z * &coefs;
            let fs = first_stages(design, &dm, &a_zz_inv, &coefs, vcov_kind, k_params)?;
            (xhat, fs)
        }
    };

    let m = weighted_cross(&xhat, &xhat, w);
    let m_inv = chol_inverse(&m, "projected design moment matrix")?;
    let beta = &m_inv * weighted_cross_vec(&xhat, &dm.y, w);

    let mut scores = DMatrix::zeros(n, N_COEF);
    for i in 0..n {
        let mut u = dm.y[i];
        for c in 0..N_COEF {
            u -= dm.x[(i, c)] * beta[c];
        }
        let wu = w[i] * u;
        for c in 0..N_COEF {
            scores[(i, c)] = wu * xhat[(i, c)];
        }
    }
    let vcov = sandwich(
        &m_inv,
        &scores,
        &design.cluster,
        design.n_clusters,
        vcov_kind,
        n,
        k_params,
    )?;

    // Recover absorbed group means on the original scale.
    let groups = design.fe_keys.len();
    let mut wsum = vec![0.0f64; groups];
    let mut resid_sum = vec![0.0f64; groups];
    for i in 0..n {
        let mut fitted = 0.0;
        for c in 0..N_COEF {
            fitted += design.x[i][c] * beta[c];
        }
        let g = design.fe[i];
        wsum[g] += design.w[i];
        resid_sum[g] += design.w[i] * (design.y[i] - fitted);
    }
    let fixed_effects = design
        .fe_keys
        .iter()
        .zip(wsum.iter().zip(&resid_sum))
        .filter(|(_, (&w, _))| w > 0.0)
        .map(|(&(rating_area, year), (&w, &r))| FixedEffect {
            rating_area,
            year,
            estimate: r / w,
        })
        .collect();

    Ok(DemandFit {
        method,
        coef_names: COEF_NAMES.iter().map(|s| s.to_string()).collect(),
        beta: beta.iter().copied().collect(),
        se: (0..N_COEF).map(|i| vcov[(i, i)].max(0.0).sqrt()).collect(),
        vcov: (0..N_COEF)
            .map(|r| (0..N_COEF).map(|c| vcov[(r, c)]).collect())
            .collect(),
        fixed_effects,
        first_stage,
        norm_mean: design.norm_mean,
        norm_sd: design.norm_sd,
        n,
        n_clusters: design.n_clusters,
        k_params,
        excluded: design.excluded,
    })
}

/// Per-endogenous-column first stages with a cluster-robust joint F on the
/// excluded instruments.
fn first_stages(
    design: &DesignMatrix,
    dm: &Demeaned,
    a_zz_inv: &DMatrix<f64>,
    coefs: &DMatrix<f64>,
    vcov_kind: VcovKind,
    k_params: usize,
) -> Result<Vec<FirstStage>> {
    let n = design.n();
    let mut out = Vec::with_capacity(N_ENDOG);
    for k in 0..N_ENDOG {
        let mut scores = DMatrix::zeros(n, N_COEF);
        for i in 0..n {
            let mut v = dm.x[(i, k)];
            for c in 0..N_COEF {
                v -= dm.z[(i, c)] * coefs[(c, k)];
            }
            let wv = design.w[i] * v;
            for c in 0..N_COEF {
                scores[(i, c)] = wv * dm.z[(i, c)];
            }
        }
        let v = sandwich(
            a_zz_inv,
            &scores,
            &design.cluster,
            design.n_clusters,
            vcov_kind,
            n,
            k_params,
        )?;
        let b = DVector::from_iterator(N_ENDOG, (0..N_ENDOG).map(|j| coefs[(j, k)]));
        let v_sub = DMatrix::from_fn(N_ENDOG, N_ENDOG, |r, c| v[(r, c)]);
        let v_sub_inv = chol_inverse(&v_sub, "first-stage instrument vcov")?;
        let wald = (b.transpose() * v_sub_inv * &b)[(0, 0)];
        out.push(FirstStage {
            endogenous: COEF_NAMES[k].to_string(),
            instrument_names: INSTRUMENT_NAMES.iter().map(|s| s.to_string()).collect(),
            instrument_coefs: (0..N_ENDOG).map(|j| coefs[(j, k)]).collect(),
            instrument_ses: (0..N_ENDOG).map(|j| v[(j, j)].max(0.0).sqrt()).collect(),
            f_statistic: wald / N_ENDOG as f64,
        });
    }
    Ok(out)
}

/// One row of the band-level effects table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectsRow {
    pub band: String,
    pub fpl_lo: f64,
    pub fpl_hi: f64,
    /// Weighted enrolled persons per calendar year in the design.
    pub enrolled_per_year: f64,
    pub mean_premium: f64,
    /// Weighted coverage rate, percent.
    pub coverage_rate: f64,
    pub fplz_mean: f64,
    pub gt200_share: f64,
    pub marginal_effect: f64,
    pub marginal_effect_se: f64,
    pub semi_elasticity: f64,
    pub semi_elasticity_se: f64,
    pub elasticity: f64,
    pub elasticity_se: f64,
}

/// Effects by %FPL band: an all-band row followed by one row per interval
/// between consecutive breaks. The first interval includes its lower
/// endpoint; the rest are half-open (lo, hi].
pub fn effects_table(
    fit: &DemandFit,
    design: &DesignMatrix,
    breaks: &[f64],
) -> Result<Vec<EffectsRow>> {
    if breaks.len() < 2 {
        return Err(Error::Config("effects need at least two breaks".into()));
    }
    if breaks.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config("effects breaks must be strictly increasing".into()));
    }
    let lo = breaks[0];
    let hi = *breaks.last().unwrap();
    let mut rows = vec![band_row(fit, design, "all", lo, hi, true)?];
    for (i, pair) in breaks.windows(2).enumerate() {
        let label = format!("{}-{}", pair[0], pair[1]);
        rows.push(band_row(fit, design, &label, pair[0], pair[1], i == 0)?);
    }
    Ok(rows)
}

fn band_row(
    fit: &DemandFit,
    design: &DesignMatrix,
    label: &str,
    lo: f64,
    hi: f64,
    closed_lo: bool,
) -> Result<EffectsRow> {
    let years: std::collections::BTreeSet<u16> =
        design.fe_keys.iter().map(|&(_, y)| y).collect();
    let n_years = years.len().max(1) as f64;

    let mut sw = 0.0;
    let mut s_prem = 0.0;
    let mut s_y = 0.0;
    let mut s_z = 0.0;
    let mut s_gt = 0.0;
    let mut s_enrolled = 0.0;
    for i in 0..design.n() {
        let f = design.fpl[i];
        let inside = if closed_lo { f >= lo } else { f > lo } && f <= hi;
        if !inside {
            continue;
        }
        let w = design.w[i];
        sw += w;
        s_prem += w * design.premium[i];
        s_y += w * design.y[i];
        s_z += w * (f - design.norm_mean) / design.norm_sd;
        s_gt += w * if f > FPL_THRESHOLD { 1.0 } else { 0.0 };
        if design.y[i] > 0.0 {
            s_enrolled += w;
        }
    }
    if !(sw > 0.0) {
        return Err(Error::Data(format!("band {label} has no weight")));
    }
    let coverage_rate = s_y / sw;
    if !(coverage_rate > 0.0) {
        return Err(Error::Data(format!(
            "band {label} has zero coverage; elasticities are undefined"
        )));
    }
    let mean_premium = s_prem / sw;
    let fplz_mean = s_z / sw;
    let gt200_share = s_gt / sw;

    let g = [1.0, fplz_mean, gt200_share];
    let me = fit.beta[0] + fit.beta[1] * fplz_mean + fit.beta[2] * gt200_share;
    let mut var = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            var += g[r] * fit.vcov[r][c] * g[c];
        }
    }
    let me_se = var.max(0.0).sqrt();
    let semi = 100.0 * me / coverage_rate;
    let semi_se = 100.0 / coverage_rate * me_se;
    let elasticity = me * mean_premium / coverage_rate;
    let elasticity_se = mean_premium / coverage_rate * me_se;

    Ok(EffectsRow {
        band: label.to_string(),
        fpl_lo: lo,
        fpl_hi: hi,
        enrolled_per_year: s_enrolled / n_years,
        mean_premium,
        coverage_rate,
        fplz_mean,
        gt200_share,
        marginal_effect: me,
        marginal_effect_se: me_se,
        semi_elasticity: semi,
        semi_elasticity_se: semi_se,
        elasticity,
        elasticity_se: elasticity_se,
    })
}

/// Draw a cluster-bootstrap replicate: clusters are sampled with
/// replacement and each draw becomes its own cluster in the copy. Rows
/// keep their original values (including the FPLz standardization), so
/// replicates differ only through which clusters appear.
pub fn resample_clusters(design: &DesignMatrix, rng: &mut impl Rng) -> DesignMatrix {
    let mut rows_by_cluster: Vec<Vec<usize>> = vec![Vec::new(); design.n_clusters];
    for i in 0..design.n() {
        rows_by_cluster[design.cluster[i]].push(i);
    }
    let mut out = DesignMatrix {
        person_id: Vec::with_capacity(design.n()),
        y: Vec::new(),
        x: Vec::new(),
        z: Vec::new(),
        w: Vec::new(),
        fe: Vec::new(),
        fe_keys: design.fe_keys.clone(),
        cluster: Vec::new(),
        n_clusters: design.n_clusters,
        fpl: Vec::new(),
        premium: Vec::new(),
        norm_mean: design.norm_mean,
        norm_sd: design.norm_sd,
        excluded: design.excluded,
    };
    for draw in 0..design.n_clusters {
        let g = rng.gen_range(0..design.n_clusters);
        for &i in &rows_by_cluster[g] {
            out.person_id.push(design.person_id[i].clone());
            out.y.push(design.y[i]);
            out.x.push(design.x[i]);
            out.z.push(design.z[i]);
            out.w.push(design.w[i]);
            out.fe.push(design.fe[i]);
            out.cluster.push(draw);
            out.fpl.push(design.fpl[i]);
            out.premium.push(design.premium[i]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Source;
    use crate::seed;

    /// Hand-rolled synthetic design: premiums driven by an instrument plus
    /// noise, coverage driven by premium with known coefficients.
    fn synthetic(n_clusters: usize, rows_per: usize, seed_val: u64) -> DesignMatrix {
        let mut rng = seed::rng_for(seed_val, "demand-test");
        let mut persons = Vec::new();
        let mut qa = BTreeMap::new();
        let mut qc = BTreeMap::new();
        let mut k = 0usize;
        for c in 0..n_clusters {
            for _ in 0..rows_per {
                k += 1;
                let fpl = 138.0 + 262.0 * rng.gen::<f64>();
                let age = 18 + (rng.gen::<f64>() * 47.0) as u32;
                let area = 1 + (rng.gen::<f64>() * 3.0) as u32;
                let year = 2022 + (rng.gen::<f64>() * 3.0) as u16;
                let cf = 40.0 + fpl * 0.8 + 20.0 * rng.gen::<f64>();
                let actual = 0.7 * cf + 5.0 * rng.gen::<f64>();
                let latent = 60.0 - 0.25 * actual + 60.0 * rng.gen::<f64>();
                let insured = latent > 30.0;
                let id = format!("T{k:05}");
                let p = Person {
                    person_id: id.clone(),
                    hiu_id: format!("C{c:05}"),
                    year,
                    rating_area: area,
                    age,
                    female: rng.gen::<f64>() < 0.5,
                    fpl,
                    hiu_size: 1,
                    weight: if insured { 1.0 } else { 1.0 + rng.gen::<f64>() },
                    insured,
                    source: if insured {
                        Source::Enrollee
                    } else {
                        Source::Potential
                    },
                };
                // Weight invariant: enrollees weigh 1; keep potential
                // weights as drawn.
                let quote = |prem: f64, regime: &str| SubsidyQuote {
                    person_id: id.clone(),
                    regime: regime.into(),
                    eligible: true,
                    benchmark_premium: prem + 4.0,
                    min_silver_premium: prem + 2.0,
                    expected_contribution: 10.0,
                    federal_ptc: 2.0,
                    state_supplement: 0.0,
                    post_subsidy_premium: prem,
                };
                qa.insert(id.clone(), quote(actual, "a"));
                qc.insert(id.clone(), quote(cf, "c"));
                persons.push(p);
            }
        }
        build_design(&persons, &qa, &qc).unwrap()
    }

    #[test]
    fn design_rows_standardize_and_interact() {
        let d = synthetic(50, 2, 5);
        assert_eq!(d.n(), 100);
        assert_eq!(d.n_clusters, 50);
        let mut sw = 0.0;
        let mut sz = 0.0;
        for i in 0..d.n() {
            sw += d.w[i];
            sz += d.w[i] * d.x[i][5];
            assert_eq!(d.x[i][1], d.x[i][0] * d.x[i][5]);
            let gt = if d.fpl[i] > 200.0 { 1.0 } else { 0.0 };
            assert_eq!(d.x[i][2], d.x[i][0] * gt);
            // Instrument rows share the exogenous block.
            assert_eq!(d.x[i][3], d.z[i][3]);
            assert_eq!(d.x[i][4], d.z[i][4]);
            assert_eq!(d.x[i][5], d.z[i][5]);
        }
        assert!((sz / sw).abs() < 1e-9, "FPLz not centered: {}", sz / sw);
    }

    #[test]
    fn missing_quotes_are_excluded_and_counted() {
        let d = synthetic(10, 2, 5);
        let persons: Vec<Person> = (0..3)
            .map(|i| Person {
                person_id: format!("P{i}"),
                hiu_id: format!("H{i}"),
                year: 2024,
                rating_area: 1,
                age: 30,
                female: false,
                fpl: 150.0 + i as f64 * 50.0,
                hiu_size: 1,
                weight: 1.0,
                insured: true,
                source: Source::Enrollee,
            })
            .collect();
        let mut qa = BTreeMap::new();
        let mut qc = BTreeMap::new();
        for (i, p) in persons.iter().enumerate() {
            let q = SubsidyQuote {
                person_id: p.person_id.clone(),
                regime: "x".into(),
                eligible: true,
                benchmark_premium: 100.0,
                min_silver_premium: 90.0,
                expected_contribution: 50.0,
                federal_ptc: 50.0,
                state_supplement: 0.0,
                post_subsidy_premium: 40.0 + i as f64,
            };
            qa.insert(p.person_id.clone(), q.clone());
            if i != 1 {
                qc.insert(p.person_id.clone(), q);
            }
        }
        let built = build_design(&persons, &qa, &qc).unwrap();
        assert_eq!(built.n(), 2);
        assert_eq!(built.excluded, 1);
        drop(d);
    }

    #[test]
    fn ols_recovers_a_planted_linear_model() {
        // Build y mechanically from x so OLS must recover the exact betas:
        // no noise, fixed effects zero.
        let mut d = synthetic(200, 2, 9);
        let planted = [-0.5, 0.1, 0.2, 3.0, 0.05, 1.5];
        for i in 0..d.n() {
            d.y[i] = (0..N_COEF).map(|c| d.x[i][c] * planted[c]).sum();
        }
        let fit = fit_ols(&d).unwrap();
        for c in 0..N_COEF {
            assert!(
                (fit.beta[c] - planted[c]).abs() < 1e-8,
                "coef {c}: {} vs {}",
                fit.beta[c],
                planted[c]
            );
        }
        for fe in &fit.fixed_effects {
            assert!(fe.estimate.abs() < 1e-8);
        }
    }

    #[test]
    fn two_sls_equals_ols_when_instruments_are_regressors() {
        let mut d = synthetic(150, 2, 11);
        d.z = d.x.clone();
        let iv = fit(&d, Method::TwoSls, VcovKind::ClusterHiu).unwrap();
        let ols = fit_ols(&d).unwrap();
        for c in 0..N_COEF {
            assert!((iv.beta[c] - ols.beta[c]).abs() < 1e-10);
            assert!((iv.se[c] - ols.se[c]).abs() < 1e-10);
        }
    }

    #[test]
    fn singleton_clusters_match_hc1_exactly() {
        let d = synthetic(300, 1, 13);
        assert_eq!(d.n_clusters, d.n());
        let clustered = fit(&d, Method::TwoSls, VcovKind::ClusterHiu).unwrap();
        let robust = fit(&d, Method::TwoSls, VcovKind::Hc1).unwrap();
        for r in 0..N_COEF {
            for c in 0..N_COEF {
                let diff = (clustered.vcov[r][c] - robust.vcov[r][c]).abs();
                let scale = robust.vcov[r][c].abs().max(1e-12);
                assert!(diff / scale < 1e-10, "vcov[{r}][{c}] differs");
            }
        }
    }

    #[test]
    fn first_stage_is_strong_on_instrumented_data() {
        let d = synthetic(200, 2, 17);
        let fit = fit_2sls(&d).unwrap();
        assert_eq!(fit.first_stage.len(), 3);
        for fs in &fit.first_stage {
            assert!(fs.f_statistic > 10.0, "{}: F={}", fs.endogenous, fs.f_statistic);
            assert_eq!(fs.instrument_coefs.len(), 3);
        }
    }

    #[test]
    fn single_cluster_is_rejected() {
        let d = synthetic(1, 40, 19);
        let err = fit_2sls(&d).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn collinear_design_is_a_numerics_error() {
        let mut d = synthetic(100, 2, 23);
        for i in 0..d.n() {
            // Make fplz a copy of female so the moment matrix loses rank.
            d.x[i][5] = d.x[i][3];
            d.z[i][5] = d.z[i][3];
            d.x[i][1] = d.x[i][0] * d.x[i][5];
            d.z[i][1] = d.z[i][0] * d.z[i][5];
        }
        let err = fit_ols(&d).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn effects_rows_cover_bands_and_carry_delta_method_ses() {
        let d = synthetic(250, 2, 29);
        let fit = fit_2sls(&d).unwrap();
        let rows = effects_table(&fit, &d, &[138.0, 200.0, 300.0, 400.0]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].band, "all");
        assert_eq!(rows[1].band, "138-200");
        assert!(rows[1].gt200_share.abs() < 1e-12);
        assert!((rows[3].gt200_share - 1.0).abs() < 1e-12);
        for r in &rows {
            assert!(r.marginal_effect_se > 0.0);
            let semi = 100.0 * r.marginal_effect / r.coverage_rate;
            assert!((r.semi_elasticity - semi).abs() < 1e-12);
            let elast = r.semi_elasticity * r.mean_premium / 100.0;
            assert!((r.elasticity - elast).abs() < 1e-9);
        }
    }

    #[test]
    fn fe_recovery_matches_group_means_of_residuals() {
        let d = synthetic(120, 2, 31);
        let fit = fit_ols(&d).unwrap();
        // Weighted mean of (y - x beta) within a group must equal the
        // reported fixed effect.
        let key = fit.fixed_effects[0].clone();
        let g = d
            .fe_keys
            .iter()
            .position(|&(a, y)| a == key.rating_area && y == key.year)
            .unwrap();
        let mut sw = 0.0;
        let mut sr = 0.0;
        for i in 0..d.n() {
            if d.fe[i] != g {
                continue;
            }
            let fitted: f64 = (0..N_COEF).map(|c| d.x[i][c] * fit.beta[c]).sum();
            sw += d.w[i];
            sr += d.w[i] * (d.y[i] - fitted);
        }
        assert!((sr / sw - key.estimate).abs() < 1e-9);
    }

    #[test]
    fn resampling_preserves_row_content_and_relabels_clusters() {
        let d = synthetic(40, 3, 37);
        let mut rng = seed::rng_for(1, "resample");
        let r = resample_clusters(&d, &mut rng);
        assert_eq!(r.n_clusters, d.n_clusters);
        assert!(r.n() > 0);
        // Every resampled row exists in the original with identical data.
        for i in 0..r.n() {
            let j = d.person_id.iter().position(|p| *p == r.person_id[i]).unwrap();
            assert_eq!(r.x[i], d.x[j]);
            assert_eq!(r.y[i], d.y[j]);
        }
        // Cluster labels are draw indices.
        assert!(r.cluster.iter().all(|&c| c < d.n_clusters));
    }
}
