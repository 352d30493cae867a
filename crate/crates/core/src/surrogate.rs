//! Surrogates seen by the rest of the pipeline: a single GP or a weighted
//! ensemble of GPs (one per hyperparameter sample).

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SoberError};
use crate::gp::{mmlt_moments, GpModel, WarpKind, WarpedGp};
use crate::kernels::Covariance;
use crate::measures::normalize;
use crate::points::Points;

#[derive(Clone, Debug)]
pub enum Surrogate {
    Plain(GpModel),
    Warped(WarpedGp),
}

impl Surrogate {
    /// The GP fitted to (possibly warped) observations.
    pub fn base(&self) -> &GpModel {
        match self {
            Surrogate::Plain(g) => g,
            Surrogate::Warped(w) => &w.base,
        }
    }

    pub fn eta(&self) -> Option<f64> {
        match self {
            Surrogate::Warped(WarpedGp {
                kind: WarpKind::Parabolic { eta },
                ..
            }) => Some(*eta),
            _ => None,
        }
    }

    pub fn predict_diag(&self, x: &Points) -> (DVector<f64>, DVector<f64>) {
        match self {
            Surrogate::Plain(g) => g.predict_diag_unchecked(x),
            Surrogate::Warped(w) => {
                let (mg, vg) = w.base.predict_diag_unchecked(x);
                match w.kind {
                    WarpKind::Parabolic { eta } => (
                        mg.zip_map(&vg, |m, v| eta - 0.5 * (m * m + v)),
                        mg.zip_map(&vg, |m, v| 0.5 * v * v + m * v * m),
                    ),
                    WarpKind::Mmlt(variant) => {
                        let n = x.len();
                        let mut mean = DVector::zeros(n);
                        let mut var = DVector::zeros(n);
                        for i in 0..n {
                            let (m1, c1) = mmlt_moments(
                                &DVector::from_element(1, mg[i]),
                                &DMatrix::from_element(1, 1, vg[i]),
                                variant,
                            );
                            mean[i] = m1[0];
                            var[i] = c1[(0, 0)].max(0.0);
                        }
                        (mean, var)
                    }
                }
            }
        }
    }

    pub fn mean(&self, x: &Points) -> DVector<f64> {
        match self {
            Surrogate::Plain(g) => g.mean_unchecked(x),
            _ => self.predict_diag(x).0,
        }
    }

    fn warped_gram(w: &WarpedGp, x: &Points, y: &Points) -> DMatrix<f64> {
        let pc = w.base.posterior_covariance();
        let cg = pc.gram(x, y);
        let mx = w.base.mean_unchecked(x);
        let my = w.base.mean_unchecked(y);
        match w.kind {
            WarpKind::Parabolic { .. } => DMatrix::from_fn(x.len(), y.len(), |i, j| {
                0.5 * cg[(i, j)] * cg[(i, j)] + mx[i] * cg[(i, j)] * my[j]
            }),
            WarpKind::Mmlt(variant) => {
                let vx = pc.diag(x);
                let vy = pc.diag(y);
                let ex = mx.zip_map(&vx, |m, v| (m + 0.5 * v).exp());
                let ey = my.zip_map(&vy, |m, v| (m + 0.5 * v).exp());
                match variant {
                    crate::gp::MmltVariant::Printed => {
                        DMatrix::from_fn(x.len(), y.len(), |i, j| mx[i] * my[j] * (vx[i] - 1.0))
                    }
                    crate::gp::MmltVariant::Standard => {
                        DMatrix::from_fn(x.len(), y.len(), |i, j| ex[i] * ey[j] * cg[(i, j)].exp_m1())
                    }
                }
            }
        }
    }
}

impl Covariance for Surrogate {
    fn gram(&self, x: &Points, y: &Points) -> DMatrix<f64> {
        match self {
            Surrogate::Plain(g) => g.posterior_covariance().gram(x, y),
            Surrogate::Warped(w) => Surrogate::warped_gram(w, x, y),
        }
    }

    fn diag(&self, x: &Points) -> DVector<f64> {
        self.predict_diag(x).1
    }

    fn project(&self, coeffs: &DMatrix<f64>, anchors: &Points, x: &Points) -> DMatrix<f64> {
        match self {
            Surrogate::Plain(g) => g.posterior_covariance().project(coeffs, anchors, x),
            Surrogate::Warped(_) => default_project(self, coeffs, anchors, x),
        }
    }

    fn mean_embedding(&self, x: &Points, support: &Points, weights: &[f64]) -> DVector<f64> {
        match self {
            Surrogate::Plain(g) => g.posterior_covariance().mean_embedding(x, support, weights),
            Surrogate::Warped(_) => self.gram(x, support) * DVector::from_column_slice(weights),
        }
    }

    fn quadratic_form(&self, support: &Points, weights: &[f64]) -> f64 {
        match self {
            Surrogate::Plain(g) => g.posterior_covariance().quadratic_form(support, weights),
            Surrogate::Warped(_) => {
                let w = DVector::from_column_slice(weights);
                w.dot(&(self.gram(support, support) * &w))
            }
        }
    }
}

fn default_project<C: Covariance + ?Sized>(c: &C, coeffs: &DMatrix<f64>, anchors: &Points, x: &Points) -> DMatrix<f64> {
    coeffs * c.gram(anchors, x)
}

/// Per-member predictions at a set of points, members in rows.
#[derive(Clone, Debug)]
pub struct EnsemblePrediction {
    pub weights: Vec<f64>,
    pub means: DMatrix<f64>,
    pub vars: DMatrix<f64>,
    pub noise: Vec<f64>,
    /// Per-member threshold when members carry their own.
    pub etas: Vec<Option<f64>>,
}

impl EnsemblePrediction {
    pub fn n_members(&self) -> usize {
        self.weights.len()
    }

    pub fn n_points(&self) -> usize {
        self.means.ncols()
    }

    pub fn single(mean: DVector<f64>, var: DVector<f64>, noise: f64) -> Self {
        EnsemblePrediction {
            weights: vec![1.0],
            means: DMatrix::from_row_slice(1, mean.len(), mean.as_slice()),
            vars: DMatrix::from_row_slice(1, var.len(), var.as_slice()),
            noise: vec![noise],
            etas: vec![None],
        }
    }

    /// `Σ_h w_h m_h(x)`.
    pub fn mixture_mean(&self) -> DVector<f64> {
        let w = DVector::from_column_slice(&self.weights);
        self.means.transpose() * w
    }

    /// `Σ_h w_h C_h(x,x)`.
    pub fn within_variance(&self) -> DVector<f64> {
        let w = DVector::from_column_slice(&self.weights);
        self.vars.transpose() * w
    }

    /// `Σ_h w_h (m_h(x) − m̄(x))²`.
    pub fn between_variance(&self) -> DVector<f64> {
        let mbar = self.mixture_mean();
        DVector::from_fn(self.n_points(), |j, _| {
            self.weights
                .iter()
                .enumerate()
                .map(|(h, w)| w * (self.means[(h, j)] - mbar[j]).powi(2))
                .sum()
        })
    }

    pub fn total_variance(&self) -> DVector<f64> {
        self.within_variance() + self.between_variance()
    }
}

/// Weighted mixture of surrogates.
#[derive(Clone, Debug)]
pub struct GpEnsemble {
    pub members: Vec<Surrogate>,
    pub weights: Vec<f64>,
}

impl GpEnsemble {
    pub fn new(members: Vec<Surrogate>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() || members.len() != weights.len() {
            return Err(SoberError::InvalidArgument("ensemble needs matching members and weights".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(SoberError::InvalidArgument("ensemble weights must be non-negative".into()));
        }
        Ok(GpEnsemble {
            members,
            weights: normalize(weights),
        })
    }

    pub fn single(gp: GpModel) -> Self {
        GpEnsemble {
            members: vec![Surrogate::Plain(gp)],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_single(&self) -> bool {
        self.members.len() == 1
    }

    /// The highest-weight member.
    pub fn leading(&self) -> &Surrogate {
        let i = (0..self.len()).max_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]).then(b.cmp(&a))).unwrap();
        &self.members[i]
    }

    pub fn predict(&self, x: &Points) -> EnsemblePrediction {
        let h = self.len();
        let mut means = DMatrix::zeros(h, x.len());
        let mut vars = DMatrix::zeros(h, x.len());
        for (i, m) in self.members.iter().enumerate() {
            let (mu, v) = m.predict_diag(x);
            means.row_mut(i).copy_from(&mu.transpose());
            vars.row_mut(i).copy_from(&v.transpose());
        }
        EnsemblePrediction {
            weights: self.weights.clone(),
            means,
            vars,
            noise: self.members.iter().map(|m| m.base().noise).collect(),
            etas: self.members.iter().map(|m| m.eta()).collect(),
        }
    }

    pub fn mean(&self, x: &Points) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (m, w) in self.members.iter().zip(&self.weights) {
            if *w > 0.0 {
                out.axpy(*w, &m.mean(x), 1.0);
            }
        }
        out
    }
}

/// Law of total covariance over the ensemble:
/// `Σ w_h C_h(x,x') + Σ w_h m_h(x) m_h(x') − m̄(x) m̄(x')`.
impl Covariance for GpEnsemble {
    fn gram(&self, x: &Points, y: &Points) -> DMatrix<f64> {
        if self.is_single() {
            return self.members[0].gram(x, y);
        }
        let mut g = DMatrix::zeros(x.len(), y.len());
        let (mut mx_bar, mut my_bar) = (DVector::zeros(x.len()), DVector::zeros(y.len()));
        for (m, w) in self.members.iter().zip(&self.weights) {
            let (mx, my) = (m.mean(x), m.mean(y));
            g += (m.gram(x, y) + &mx * my.transpose()) * *w;
            mx_bar.axpy(*w, &mx, 1.0);
            my_bar.axpy(*w, &my, 1.0);
        }
        g - mx_bar * my_bar.transpose()
    }

    fn diag(&self, x: &Points) -> DVector<f64> {
        if self.is_single() {
            return self.members[0].diag(x);
        }
        self.predict(x).total_variance()
    }

    fn project(&self, coeffs: &DMatrix<f64>, anchors: &Points, x: &Points) -> DMatrix<f64> {
        if self.is_single() {
            return self.members[0].project(coeffs, anchors, x);
        }
        let mut out = DMatrix::zeros(coeffs.nrows(), x.len());
        let (mut ma_bar, mut mx_bar) = (DVector::zeros(anchors.len()), DVector::zeros(x.len()));
        for (m, w) in self.members.iter().zip(&self.weights) {
            let (ma, mx) = (m.mean(anchors), m.mean(x));
            out += (m.project(coeffs, anchors, x) + (coeffs * &ma) * mx.transpose()) * *w;
            ma_bar.axpy(*w, &ma, 1.0);
            mx_bar.axpy(*w, &mx, 1.0);
        }
        out - (coeffs * ma_bar) * mx_bar.transpose()
    }

    fn mean_embedding(&self, x: &Points, support: &Points, weights: &[f64]) -> DVector<f64> {
        if self.is_single() {
            return self.members[0].mean_embedding(x, support, weights);
        }
        let wv = DVector::from_column_slice(weights);
        let mut out = DVector::zeros(x.len());
        let (mut mx_bar, mut s_bar) = (DVector::zeros(x.len()), 0.0);
        for (m, w) in self.members.iter().zip(&self.weights) {
            let (mx, ms) = (m.mean(x), m.mean(support));
            let s = ms.dot(&wv);
            out += (m.mean_embedding(x, support, weights) + &mx * s) * *w;
            mx_bar.axpy(*w, &mx, 1.0);
            s_bar += w * s;
        }
        out - mx_bar * s_bar
    }

    fn quadratic_form(&self, support: &Points, weights: &[f64]) -> f64 {
        if self.is_single() {
            return self.members[0].quadratic_form(support, weights);
        }
        let wv = DVector::from_column_slice(weights);
        let (mut total, mut s_bar) = (0.0, 0.0);
        for (m, w) in self.members.iter().zip(&self.weights) {
            let s = m.mean(support).dot(&wv);
            total += w * (m.quadratic_form(support, weights) + s * s);
            s_bar += w * s;
        }
        total - s_bar * s_bar
    }
}

/// `K'(x,x') = m̃(x) C(x,x') m̃(x')` with `m̃ = max(m − offset, 0)` taken from
/// the ensemble mean.
pub struct MeanWeighted<'a> {
    pub inner: &'a GpEnsemble,
    pub offset: f64,
}

impl MeanWeighted<'_> {
    fn weight(&self, x: &Points) -> DVector<f64> {
        self.inner.mean(x).map(|m| (m - self.offset).max(0.0))
    }
}

impl Covariance for MeanWeighted<'_> {
    fn gram(&self, x: &Points, y: &Points) -> DMatrix<f64> {
        let (wx, wy) = (self.weight(x), self.weight(y));
        let mut g = self.inner.gram(x, y);
        for j in 0..y.len() {
            for i in 0..x.len() {
                g[(i, j)] *= wx[i] * wy[j];
            }
        }
        g
    }

    fn diag(&self, x: &Points) -> DVector<f64> {
        let wx = self.weight(x);
        self.inner.diag(x).component_mul(&wx.component_mul(&wx))
    }

    fn project(&self, coeffs: &DMatrix<f64>, anchors: &Points, x: &Points) -> DMatrix<f64> {
        let wa = self.weight(anchors);
        let wx = self.weight(x);
        let mut c = coeffs.clone();
        for j in 0..c.ncols() {
            c.column_mut(j).scale_mut(wa[j]);
        }
        let mut out = self.inner.project(&c, anchors, x);
        for j in 0..out.ncols() {
            out.column_mut(j).scale_mut(wx[j]);
        }
        out
    }

    fn mean_embedding(&self, x: &Points, support: &Points, weights: &[f64]) -> DVector<f64> {
        let ws = self.weight(support);
        let scaled: Vec<f64> = weights.iter().zip(ws.iter()).map(|(a, b)| a * b).collect();
        self.inner.mean_embedding(x, support, &scaled).component_mul(&self.weight(x))
    }

    fn quadratic_form(&self, support: &Points, weights: &[f64]) -> f64 {
        let ws = self.weight(support);
        let scaled: Vec<f64> = weights.iter().zip(ws.iter()).map(|(a, b)| a * b).collect();
        self.inner.quadratic_form(support, &scaled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Dataset;
    use crate::kernels::KernelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(n: usize, seed: u64) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Points::from_flat(2, (0..2 * n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    fn ensemble() -> GpEnsemble {
        let x = pts(8, 1);
        let y: Vec<f64> = x.rows().map(|r| r[0] - r[1]).collect();
        let d = Dataset::new(x, y).unwrap();
        let a = GpModel::new(d.clone(), KernelParams::rbf(1.0, vec![0.3, 0.3]).unwrap(), 0.01).unwrap();
        let b = GpModel::new(d, KernelParams::rbf(0.5, vec![0.8, 0.5]).unwrap(), 0.05).unwrap();
        GpEnsemble::new(vec![Surrogate::Plain(a), Surrogate::Plain(b)], vec![0.3, 0.7]).unwrap()
    }

    #[test]
    fn mixture_covariance_fast_paths_match_gram() {
        let e = ensemble();
        let x = pts(20, 2);
        let s = pts(15, 3);
        let w: Vec<f64> = (0..15).map(|i| (i + 1) as f64 / 120.0).collect();
        let wv = DVector::from_column_slice(&w);
        let g = e.gram(&x, &s);
        assert!((e.mean_embedding(&x, &s, &w) - &g * &wv).amax() < 1e-10);
        let gs = e.gram(&s, &s);
        assert!((e.quadratic_form(&s, &w) - wv.dot(&(&gs * &wv))).abs() < 1e-10);
        let coeffs = DMatrix::from_fn(2, 15, |i, j| (i as f64 + 1.0) * (j as f64).sin());
        let direct = &coeffs * e.gram(&s, &x);
        assert!((e.project(&coeffs, &s, &x) - direct).amax() < 1e-10);
        let gx = e.gram(&x, &x);
        assert!((e.diag(&x) - gx.diagonal()).amax() < 1e-10);
    }

    #[test]
    fn mean_weighted_fast_paths_match_gram() {
        let e = ensemble();
        let mw = MeanWeighted { inner: &e, offset: -0.5 };
        let x = pts(10, 4);
        let s = pts(12, 5);
        let w: Vec<f64> = vec![1.0 / 12.0; 12];
        let wv = DVector::from_column_slice(&w);
        let g = mw.gram(&x, &s);
        assert!((mw.mean_embedding(&x, &s, &w) - &g * &wv).amax() < 1e-10);
        assert!((mw.quadratic_form(&s, &w) - wv.dot(&(mw.gram(&s, &s) * &wv))).abs() < 1e-10);
        let coeffs = DMatrix::from_fn(3, 12, |i, j| ((i + j) % 4) as f64 - 1.5);
        assert!((mw.project(&coeffs, &s, &x) - &coeffs * mw.gram(&s, &x)).amax() < 1e-10);
    }

    #[test]
    fn identical_members_have_no_between_term() {
        let x = pts(6, 6);
        let d = Dataset::new(x.clone(), x.rows().map(|r| r[0]).collect()).unwrap();
        let g = GpModel::new(d, KernelParams::rbf(1.0, vec![0.4, 0.4]).unwrap(), 0.01).unwrap();
        let e = GpEnsemble::new(vec![Surrogate::Plain(g.clone()), Surrogate::Plain(g.clone())], vec![1.0, 1.0]).unwrap();
        let q = pts(5, 7);
        let p = e.predict(&q);
        let (_, v) = g.predict_diag(&q).unwrap();
        assert!((p.total_variance() - v).amax() < 1e-12);
    }
}
