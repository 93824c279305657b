//! Simulation designs, the closed-form nuisances of design 2 and a
//! brute-force oracle for the true complier distribution contrast.
//!
//! Design 2 draws `X ~ N(0, I_5)`, `Z ~ Bernoulli(0.5)` and a uniform
//! threshold `u` per unit; `W(z) = 1{u <= p(z, x)}` so nobody defies.
//! Outcomes follow `Y(0) = x1 + sin(pi x2) + e0` and
//! `Y(1) = Y(0) + 10 + cos(pi x3) + e1`.
//!
//! Design 1 labels each unit a complier with probability 0.5 and otherwise
//! an always- or never-taker with equal probability. `Y(0) = x1 + 0.5 x2^2 + e0`;
//! compliers get `Y(1) = Y(0) + 5 + x3 + 2 e1`, everyone else `Y(1) = Y(0)`.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{Dataset, YGrid};
use crate::error::{Error, Result};
use crate::estimator::ScoreForm;
use crate::nuisance::{FoldNuisance, NuisanceProvider};
use crate::numeric::sigmoid;
use crate::rng::{derive_seed, stream};

pub const DGP_DIM: usize = 5;
/// Units per oracle batch; batches use disjoint streams.
const ORACLE_BATCH: usize = 25_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dgp {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Dgp {
    pub fn id(self) -> u8 {
        match self {
            Dgp::One => 1,
            Dgp::Two => 2,
        }
    }
}

impl TryFrom<u8> for Dgp {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Dgp::One),
            2 => Ok(Dgp::Two),
            other => Err(Error::Config(format!("unknown dgp {other}, expected 1 or 2"))),
        }
    }
}

fn check_dim(x: &[f64]) -> Result<()> {
    if x.len() != DGP_DIM {
        return Err(Error::Shape(format!("expected {DGP_DIM} covariates, got {}", x.len())));
    }
    Ok(())
}

fn index2(x: &[f64]) -> f64 {
    x[0] + (PI * x[1]).sin() - (PI * x[2]).cos() + 0.5 * x[3] * x[3] - 0.5 * x[4] * x[4]
}

/// `sigmoid(x1 + sin(pi x2) - cos(pi x3) + 0.5 x4^2 - 0.5 x5^2)`. The
/// generator ignores it and draws `Z` with probability 0.5.
pub fn dgp2_pi(x: &[f64]) -> Result<f64> {
    check_dim(x)?;
    Ok(sigmoid(index2(x)))
}

pub fn dgp2_p(z: u8, x: &[f64]) -> Result<f64> {
    check_dim(x)?;
    Ok(sigmoid(f64::from(z) + index2(x)))
}

/// The closed-form sigmoid outcome model. It is not the CDF implied by the
/// outcome equations; see [`dgp2_outcome_cdf`] for that.
pub fn dgp2_mu(y: f64, w: u8, x: &[f64]) -> Result<f64> {
    check_dim(x)?;
    let w = f64::from(w);
    let t = y - w * (x[0] + (PI * x[1]).sin()) - (1.0 - w) * (PI * x[2]).cos() - 0.5 * x[3] * x[3]
        + 0.5 * x[4] * x[4];
    Ok(sigmoid(t))
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `P(Y(w) <= y | X = x)` under design 2.
pub fn dgp2_outcome_cdf(y: f64, w: u8, x: &[f64]) -> Result<f64> {
    check_dim(x)?;
    let m0 = x[0] + (PI * x[1]).sin();
    Ok(if w == 1 {
        std_normal_cdf((y - m0 - 10.0 - (PI * x[2]).cos()) / SQRT_2)
    } else {
        std_normal_cdf(y - m0)
    })
}

/// `P(Y <= y | Z = z, X = x) = p(z,x) F_{Y(1)|X}(y) + (1 - p(z,x)) F_{Y(0)|X}(y)`.
pub fn dgp2_implied_mu(y: f64, z: u8, x: &[f64]) -> Result<f64> {
    let p = dgp2_p(z, x)?;
    Ok(p * dgp2_outcome_cdf(y, 1, x)? + (1.0 - p) * dgp2_outcome_cdf(y, 0, x)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dgp2Latents {
    pub u: Vec<f64>,
    pub eps0: Vec<f64>,
    pub eps1: Vec<f64>,
    pub complier: Vec<bool>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplianceType {
    Complier,
    AlwaysTaker,
    NeverTaker,
}

impl ComplianceType {
    pub fn label(self) -> &'static str {
        match self {
            ComplianceType::Complier => "complier",
            ComplianceType::AlwaysTaker => "always_taker",
            ComplianceType::NeverTaker => "never_taker",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dgp1Latents {
    pub kind: Vec<ComplianceType>,
    pub eps0: Vec<f64>,
    pub eps1: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Latents {
    Dgp1(Dgp1Latents),
    Dgp2(Dgp2Latents),
}

impl Latents {
    pub fn complier(&self) -> Vec<bool> {
        match self {
            Latents::Dgp1(l) => l.kind.iter().map(|&k| k == ComplianceType::Complier).collect(),
            Latents::Dgp2(l) => l.complier.clone(),
        }
    }

    pub fn potential_outcomes(&self) -> (&[f64], &[f64]) {
        match self {
            Latents::Dgp1(l) => (&l.y0, &l.y1),
            Latents::Dgp2(l) => (&l.y0, &l.y1),
        }
    }

    /// Sidecar CSV with one row per unit, aligned with the dataset file.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        match self {
            Latents::Dgp2(l) => {
                w.write_record(["complier", "y0", "y1", "u", "eps0", "eps1"])?;
                for i in 0..l.u.len() {
                    w.write_record([
                        u8::from(l.complier[i]).to_string(),
                        l.y0[i].to_string(),
                        l.y1[i].to_string(),
                        l.u[i].to_string(),
                        l.eps0[i].to_string(),
                        l.eps1[i].to_string(),
                    ])?;
                }
            }
            Latents::Dgp1(l) => {
                w.write_record(["complier", "y0", "y1", "type", "eps0", "eps1"])?;
                for i in 0..l.kind.len() {
                    w.write_record([
                        u8::from(l.kind[i] == ComplianceType::Complier).to_string(),
                        l.y0[i].to_string(),
                        l.y1[i].to_string(),
                        l.kind[i].label().to_string(),
                        l.eps0[i].to_string(),
                        l.eps1[i].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Input("n must be at least 1".into()));
    }
    Ok(())
}

pub fn gen_dgp2(n: usize, seed: u64) -> Result<(Dataset<f64>, Dgp2Latents)> {
    check_n(n)?;
    let mut rng = stream(seed, "dgp2", &[]);
    let mut x = Array2::zeros((n, DGP_DIM));
    let (mut y, mut w, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut lat = Dgp2Latents {
        u: Vec::with_capacity(n),
        eps0: Vec::with_capacity(n),
        eps1: Vec::with_capacity(n),
        complier: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
    };
    for i in 0..n {
        for j in 0..DGP_DIM {
            x[[i, j]] = rng.sample(StandardNormal);
        }
        let zi = u8::from(rng.random_bool(0.5));
        let u: f64 = rng.random();
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);

        let row = x.row(i);
        let xi = row.as_slice().expect("standard layout");
        let base = index2(xi);
        let p0 = sigmoid(base);
        let p1 = sigmoid(1.0 + base);
        let wi = u8::from(u <= if zi == 1 { p1 } else { p0 });
        let y0 = xi[0] + (PI * xi[1]).sin() + e0;
        let y1 = y0 + 10.0 + (PI * xi[2]).cos() + e1;

        y.push(if wi == 1 { y1 } else { y0 });
        w.push(wi);
        z.push(zi);
        lat.u.push(u);
        lat.eps0.push(e0);
        lat.eps1.push(e1);
        lat.complier.push(p0 < u && u <= p1);
        lat.y0.push(y0);
        lat.y1.push(y1);
    }
    Ok((Dataset::new(y, w, z, x)?, lat))
}

pub fn gen_dgp1(n: usize, seed: u64) -> Result<(Dataset<f64>, Dgp1Latents)> {
    check_n(n)?;
    let mut rng = stream(seed, "dgp1", &[]);
    let mut x = Array2::zeros((n, DGP_DIM));
    let (mut y, mut w, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut lat = Dgp1Latents {
        kind: Vec::with_capacity(n),
        eps0: Vec::with_capacity(n),
        eps1: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
    };
    for i in 0..n {
        for j in 0..DGP_DIM {
            x[[i, j]] = rng.sample(StandardNormal);
        }
        let zi = u8::from(rng.random_bool(0.5));
        let kind = if rng.random_bool(0.5) {
            ComplianceType::Complier
        } else if rng.random_bool(0.5) {
            ComplianceType::AlwaysTaker
        } else {
            ComplianceType::NeverTaker
        };
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);

        let (x1, x2, x3) = (x[[i, 0]], x[[i, 1]], x[[i, 2]]);
        let y0 = x1 + 0.5 * x2 * x2 + e0;
        let (wi, y1) = match kind {
            ComplianceType::Complier => (zi, y0 + 5.0 + x3 + 2.0 * e1),
            ComplianceType::AlwaysTaker => (1, y0),
            ComplianceType::NeverTaker => (0, y0),
        };
        y.push(if wi == 1 { y1 } else { y0 });
        w.push(wi);
        z.push(zi);
        lat.kind.push(kind);
        lat.eps0.push(e0);
        lat.eps1.push(e1);
        lat.y0.push(y0);
        lat.y1.push(y1);
    }
    Ok((Dataset::new(y, w, z, x)?, lat))
}

pub fn generate(dgp: Dgp, n: usize, seed: u64) -> Result<(Dataset<f64>, Latents)> {
    match dgp {
        Dgp::One => gen_dgp1(n, seed).map(|(d, l)| (d, Latents::Dgp1(l))),
        Dgp::Two => gen_dgp2(n, seed).map(|(d, l)| (d, Latents::Dgp2(l))),
    }
}

/// `F_{Y(1)|C}(y) - F_{Y(0)|C}(y)` from the empirical complier CDFs of `m`
/// simulated units.
pub fn true_divlate(dgp: Dgp, ygrid: &YGrid<f64>, m: usize, seed: u64) -> Result<Vec<f64>> {
    check_n(m)?;
    let batches = m.div_ceil(ORACLE_BATCH);
    let g = ygrid.len();
    let counts = (0..batches)
        .into_par_iter()
        .map(|b| {
            let size = ORACLE_BATCH.min(m - b * ORACLE_BATCH);
            let (_, lat) = generate(dgp, size, derive_seed(seed, "oracle", &[b as u64]))?;
            let complier = lat.complier();
            let (y0, y1) = lat.potential_outcomes();
            let mut c0: Vec<f64> = (0..size).filter(|&i| complier[i]).map(|i| y0[i]).collect();
            let mut c1: Vec<f64> = (0..size).filter(|&i| complier[i]).map(|i| y1[i]).collect();
            c0.sort_by(f64::total_cmp);
            c1.sort_by(f64::total_cmp);
            let below = |v: &[f64], level: f64| v.partition_point(|&y| y <= level) as u64;
            let per_level: Vec<(u64, u64)> =
                ygrid.levels().iter().map(|&l| (below(&c1, l), below(&c0, l))).collect();
            Ok((c0.len() as u64, per_level))
        })
        .collect::<Result<Vec<_>>>()?;

    let total: u64 = counts.iter().map(|(c, _)| c).sum();
    if total == 0 {
        return Err(Error::Oracle(format!("no compliers among {m} simulated units")));
    }
    Ok((0..g)
        .map(|k| {
            let (a, b) = counts.iter().fold((0u64, 0u64), |(a, b), (_, v)| (a + v[k].0, b + v[k].1));
            (a as f64 - b as f64) / total as f64
        })
        .collect())
}

/// True design-2 nuisances: `pi = 0.5`, `p(z,x)` and, depending on the score
/// form, the implied `P(Y <= y | Z, X)` or `P(Y(w) <= y | X)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Dgp2OracleNuisance;

#[derive(Debug, Clone)]
pub struct Dgp2OracleFit {
    levels: Vec<f64>,
    form: ScoreForm,
}

impl NuisanceProvider<f64> for Dgp2OracleNuisance {
    type Fit = Dgp2OracleFit;

    fn fit(&self, data: &Dataset<f64>, _: &[usize], ygrid: &YGrid<f64>, form: ScoreForm, _: usize) -> Result<Dgp2OracleFit> {
        if data.dim() != DGP_DIM {
            return Err(Error::Shape(format!("oracle nuisances need {DGP_DIM} covariates, got {}", data.dim())));
        }
        Ok(Dgp2OracleFit { levels: ygrid.levels().to_vec(), form })
    }
}

fn map_rows(x: &Array2<f64>, f: impl Fn(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    x.rows()
        .into_iter()
        .map(|r: ArrayView1<f64>| f(r.as_slice().expect("standard layout")))
        .collect()
}

impl FoldNuisance<f64> for Dgp2OracleFit {
    fn pi(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(vec![0.5; x.nrows()])
    }

    fn p(&self, z: u8, x: &Array2<f64>) -> Result<Vec<f64>> {
        map_rows(x, |r| dgp2_p(z, r))
    }

    fn mu(&self, y_index: usize, arm: u8, x: &Array2<f64>) -> Result<Vec<f64>> {
        let level = *self
            .levels
            .get(y_index)
            .ok_or_else(|| Error::Input(format!("y-grid index {y_index} out of range")))?;
        match self.form {
            ScoreForm::Orthogonal => map_rows(x, |r| dgp2_implied_mu(level, arm, r)),
            ScoreForm::Published => map_rows(x, |r| dgp2_outcome_cdf(level, arm, r)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZERO: [f64; 5] = [0.0; 5];

    #[test]
    fn closed_form_examples() {
        let s = 1.0 / (1.0 + 1f64.exp());
        assert!((dgp2_pi(&ZERO).unwrap() - 0.268_941_421_369_995_1).abs() < 1e-12);
        assert!((dgp2_pi(&ZERO).unwrap() - s).abs() < 1e-15);
        assert_eq!(dgp2_p(1, &ZERO).unwrap(), 0.5);
        assert!((dgp2_mu(0.0, 0, &ZERO).unwrap() - s).abs() < 1e-15);
        assert!(matches!(dgp2_pi(&[0.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(dgp2_mu(0.0, 1, &[0.0; 6]), Err(Error::Shape(_))));
    }

    #[test]
    fn evaluators_are_pure() {
        let x = [0.3, -1.2, 0.7, 2.0, -0.4];
        for _ in 0..3 {
            assert_eq!(dgp2_p(0, &x).unwrap().to_bits(), dgp2_p(0, &x).unwrap().to_bits());
            assert_eq!(
                dgp2_implied_mu(1.5, 1, &x).unwrap().to_bits(),
                dgp2_implied_mu(1.5, 1, &x).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn dgp2_sample_properties() {
        let (d, lat) = gen_dgp2(10_000, 3).unwrap();
        let z_mean = d.z().iter().map(|&v| f64::from(v)).sum::<f64>() / 1e4;
        assert!((0.45..=0.55).contains(&z_mean));

        let mut p_gap = 0.0;
        let mut compliers = 0;
        for i in 0..d.len() {
            let row = d.x().row(i).to_vec();
            let (p0, p1) = (dgp2_p(0, &row).unwrap(), dgp2_p(1, &row).unwrap());
            p_gap += p1 - p0;
            // W(z) = 1{u <= p(z,x)}; monotone in z
            let (w0, w1) = (lat.u[i] <= p0, lat.u[i] <= p1);
            assert!(w1 >= w0);
            assert_eq!(lat.complier[i], w1 && !w0);
            assert_eq!(d.w()[i] == 1, if d.z()[i] == 1 { w1 } else { w0 });
            let shift = lat.y1[i] - lat.y0[i] - lat.eps1[i];
            assert!((9.0 - 1e-12..=11.0 + 1e-12).contains(&shift));
            let observed = if d.w()[i] == 1 { lat.y1[i] } else { lat.y0[i] };
            assert_eq!(d.y()[i], observed);
            compliers += usize::from(lat.complier[i]);
        }
        assert!((compliers as f64 / 1e4 - p_gap / 1e4).abs() <= 0.02);
    }

    #[test]
    fn dgp1_sample_properties() {
        let (d, lat) = gen_dgp1(10_000, 4).unwrap();
        let mut compliers = 0;
        for i in 0..d.len() {
            match lat.kind[i] {
                ComplianceType::NeverTaker => assert_eq!(d.w()[i], 0),
                ComplianceType::AlwaysTaker => assert_eq!(d.w()[i], 1),
                ComplianceType::Complier => {
                    assert_eq!(d.w()[i], d.z()[i]);
                    compliers += 1;
                }
            }
            if lat.kind[i] != ComplianceType::Complier {
                assert_eq!(lat.y1[i], lat.y0[i]);
            }
        }
        assert!((compliers as f64 / 1e4 - 0.5).abs() <= 0.02);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_dgp2(50, 9).unwrap(), gen_dgp2(50, 9).unwrap());
        assert_eq!(gen_dgp1(50, 9).unwrap(), gen_dgp1(50, 9).unwrap());
        assert_ne!(gen_dgp2(50, 9).unwrap().0, gen_dgp2(50, 10).unwrap().0);
        assert!(matches!(gen_dgp2(0, 1), Err(Error::Input(_))));
    }

    #[test]
    fn implied_cdf_matches_simulation_at_fixed_x() {
        // independent route: simulate the generative equations at fixed x
        let x = [0.4, -0.3, 0.8, 1.1, -0.6];
        let mut rng = stream(77, "implied-check", &[]);
        let draws = 200_000;
        for (z, level) in [(0u8, 0.5), (1, 0.5), (1, 10.0), (0, 11.5)] {
            let p = dgp2_p(z, &x).unwrap();
            let mut hits = 0usize;
            for _ in 0..draws {
                let u: f64 = rng.random();
                let e0: f64 = rng.sample(StandardNormal);
                let e1: f64 = rng.sample(StandardNormal);
                let y0 = x[0] + (PI * x[1]).sin() + e0;
                let y = if u <= p { y0 + 10.0 + (PI * x[2]).cos() + e1 } else { y0 };
                hits += usize::from(y <= level);
            }
            let mc = hits as f64 / draws as f64;
            assert!((mc - dgp2_implied_mu(level, z, &x).unwrap()).abs() < 0.005, "z={z} y={level}");
        }
    }

    #[test]
    fn oracle_curve_properties() {
        let grid = YGrid::new(vec![-20.0, -2.0, 0.0, 2.0, 6.0, 10.0, 12.0, 40.0]).unwrap();
        let m = 100_000;
        let d2 = true_divlate(Dgp::Two, &grid, m, 1).unwrap();
        assert!(d2[0].abs() <= 0.01 && d2[7].abs() <= 0.01);
        assert!(d2.iter().all(|&v| v <= 0.01 && v >= -1.0));
        assert!(d2[3] < -0.5);
        assert_eq!(d2, true_divlate(Dgp::Two, &grid, m, 1).unwrap());

        let d2_big = true_divlate(Dgp::Two, &grid, 2 * m, 1).unwrap();
        let tol = 2.0 / (m as f64).sqrt() + 0.005;
        for (a, b) in d2.iter().zip(&d2_big) {
            assert!((a - b).abs() <= tol);
        }

        let d1 = true_divlate(Dgp::One, &grid, m, 2).unwrap();
        assert!(d1[0].abs() <= 0.01 && d1[7].abs() <= 0.01);
        assert!(d1.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn oracle_curve_matches_closed_form_integral() {
        // DGP 2: Delta(y) = E[(p1 - p0)(F1 - F0)] / E[p1 - p0], integrated
        // by a separate covariate sample.
        let grid = YGrid::new(vec![0.0, 5.0, 10.0]).unwrap();
        let oracle = true_divlate(Dgp::Two, &grid, 200_000, 5).unwrap();
        let mut rng = stream(6, "integral", &[]);
        let (mut num, mut den) = (vec![0.0; 3], 0.0);
        for _ in 0..200_000 {
            let x: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
            let gap = dgp2_p(1, &x).unwrap() - dgp2_p(0, &x).unwrap();
            den += gap;
            for (k, &l) in grid.levels().iter().enumerate() {
                num[k] += gap * (dgp2_outcome_cdf(l, 1, &x).unwrap() - dgp2_outcome_cdf(l, 0, &x).unwrap());
            }
        }
        for k in 0..3 {
            assert!((oracle[k] - num[k] / den).abs() < 0.01);
        }
    }

    #[test]
    fn dgp_ids() {
        assert_eq!(Dgp::try_from(2).unwrap(), Dgp::Two);
        assert!(matches!(Dgp::try_from(3), Err(Error::Config(_))));
        assert_eq!(Dgp::One.id(), 1);
    }
}
