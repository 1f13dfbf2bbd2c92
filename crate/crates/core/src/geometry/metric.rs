use nalgebra::DMatrix;

use crate::dsl::MetricSpec;

use super::GeometryError;

/// Metric data at one point: g, its inverse, and the first two coordinate
/// derivatives, all exact (from jets).
#[derive(Debug, Clone)]
pub struct PointMetric {
    pub n: usize,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    /// `dg[(k * n + i) * n + j]` = d_k g_ij.
    pub dg: Vec<f64>,
    /// `ddg[((k * n + l) * n + i) * n + j]` = d_k d_l g_ij.
    pub ddg: Vec<f64>,
}

/// Christoffel symbols of the second kind and their first derivatives.
#[derive(Debug, Clone)]
pub struct Christoffel {
    pub n: usize,
    /// `gamma[(k * n + i) * n + j]` = Gamma^k_ij.
    pub gamma: Vec<f64>,
    /// `dgamma[((m * n + k) * n + i) * n + j]` = d_m Gamma^k_ij.
    pub dgamma: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Curvature {
    pub n: usize,
    /// `riemann[((a * n + b) * n + c) * n + d]` = R^a_bcd.
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Inverse of an SPD matrix via Cholesky; reports the smallest eigenvalue otherwise.
pub fn spd_inverse(g: &DMatrix<f64>, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    match g.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => Err(GeometryError::NotPositiveDefinite { min_eigenvalue: min_eigenvalue(g), point: point.to_vec() }),
    }
}

pub fn metric_at(spec: &MetricSpec, point: &[f64]) -> Result<PointMetric, GeometryError> {
    let n = spec.dim();
    if point.len() != n {
        return Err(GeometryError::Grid(format!("point has {} coordinates, metric has {n}", point.len())));
    }
    let jets = spec.eval_jets(point)?;
    let mut g = DMatrix::zeros(n, n);
    let mut dg = vec![0.0; n * n * n];
    let mut ddg = vec![0.0; n * n * n * n];
    let mut p = 0;
    for i in 0..n {
        for j in i..n {
            let jet = &jets[p];
            p += 1;
            g[(i, j)] = jet.value;
            g[(j, i)] = jet.value;
            for k in 0..n {
                dg[(k * n + i) * n + j] = jet.grad[k];
                dg[(k * n + j) * n + i] = jet.grad[k];
                for l in 0..n {
                    let h = jet.h(k, l);
                    ddg[((k * n + l) * n + i) * n + j] = h;
                    ddg[((k * n + l) * n + j) * n + i] = h;
                }
            }
        }
    }
    let ginv = spd_inverse(&g, point)?;
    Ok(PointMetric { n, g, ginv, dg, ddg })
}

impl PointMetric {
    #[inline]
    pub fn d(&self, k: usize, i: usize, j: usize) -> f64 {
        self.dg[(k * self.n + i) * self.n + j]
    }

    #[inline]
    pub fn dd(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.ddg[((k * n + l) * n + i) * n + j]
    }

    pub fn det(&self) -> f64 {
        self.g.determinant()
    }

    /// d_m g^{kl} = -g^{ka} d_m g_ab g^{bl}.
    pub fn dginv(&self, m: usize) -> DMatrix<f64> {
        let n = self.n;
        let dgm = DMatrix::from_fn(n, n, |a, b| self.d(m, a, b));
        -(&self.ginv * dgm * &self.ginv)
    }

    pub fn christoffel(&self) -> Christoffel {
        let n = self.n;
        // lowered symbols Gamma_lij and their derivatives
        let mut low = vec![0.0; n * n * n];
        let mut dlow = vec![0.0; n * n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    low[(l * n + i) * n + j] = 0.5 * (self.d(i, j, l) + self.d(j, i, l) - self.d(l, i, j));
                    for m in 0..n {
                        dlow[((m * n + l) * n + i) * n + j] =
                            0.5 * (self.dd(m, i, j, l) + self.dd(m, j, i, l) - self.dd(m, l, i, j));
                    }
                }
            }
        }
        let mut gamma = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    gamma[(k * n + i) * n + j] = (0..n).map(|l| self.ginv[(k, l)] * low[(l * n + i) * n + j]).sum();
                }
            }
        }
        let mut dgamma = vec![0.0; n * n * n * n];
        for m in 0..n {
            let dgi = self.dginv(m);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        dgamma[((m * n + k) * n + i) * n + j] = (0..n)
                            .map(|l| dgi[(k, l)] * low[(l * n + i) * n + j] + self.ginv[(k, l)] * dlow[((m * n + l) * n + i) * n + j])
                            .sum();
                    }
                }
            }
        }
        Christoffel { n, gamma, dgamma }
    }

    pub fn curvature(&self) -> Curvature {
        curvature(self, &self.christoffel())
    }
}

impl Christoffel {
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[(k * self.n + i) * self.n + j]
    }

    #[inline]
    pub fn d(&self, m: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.dgamma[((m * n + k) * n + i) * n + j]
    }
}

/// R^a_bcd = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb,
/// Ric_bd = R^a_bad, R = g^bd Ric_bd (round sphere has R > 0).
pub fn curvature(pm: &PointMetric, ch: &Christoffel) -> Curvature {
    let n = pm.n;
    let mut riemann = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut r = ch.d(c, a, d, b) - ch.d(d, a, c, b);
                    for e in 0..n {
                        r += ch.get(a, c, e) * ch.get(e, d, b) - ch.get(a, d, e) * ch.get(e, c, b);
                    }
                    riemann[((a * n + b) * n + c) * n + d] = r;
                }
            }
        }
    }
    let ricci = DMatrix::from_fn(n, n, |b, d| (0..n).map(|a| riemann[((a * n + b) * n + a) * n + d]).sum());
    // symmetrize away rounding noise
    let ricci = (&ricci + ricci.transpose()) * 0.5;
    let scalar = (0..n).flat_map(|b| (0..n).map(move |d| (b, d))).map(|(b, d)| pm.ginv[(b, d)] * ricci[(b, d)]).sum();
    Curvature { n, riemann, ricci, scalar }
}

impl Curvature {
    /// Ric(v, v).
    pub fn ricci_vv(&self, v: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += self.ricci[(a, b)] * v[a] * v[b];
            }
        }
        s
    }

    /// |Rm|_g^2 = R_abcd R^abcd, with the first index lowered by g.
    pub fn riemann_norm_sq(&self, pm: &PointMetric) -> f64 {
        let n = self.n;
        let idx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
        // lower: R_abcd = g_ae R^e_bcd
        let mut low = vec![0.0; n * n * n * n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        low[idx(a, b, c, d)] = (0..n).map(|e| pm.g[(a, e)] * self.riemann[idx(e, b, c, d)]).sum();
                    }
                }
            }
        }
        // raise all four with g^-1 one index at a time
        let mut t = low.clone();
        for slot in 0..4 {
            let mut out = vec![0.0; t.len()];
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            let mut s = 0.0;
                            for e in 0..n {
                                let (ia, ib, ic, id) = match slot {
                                    0 => (e, b, c, d),
                                    1 => (a, e, c, d),
                                    2 => (a, b, e, d),
                                    _ => (a, b, c, e),
                                };
                                let free = [a, b, c, d][slot];
                                s += pm.ginv[(free, e)] * t[idx(ia, ib, ic, id)];
                            }
                            out[idx(a, b, c, d)] = s;
                        }
                    }
                }
            }
            t = out;
        }
        low.iter().zip(&t).map(|(x, y)| x * y).sum()
    }
}

/// Scalar curvature at a point.
pub fn scalar_curvature(spec: &MetricSpec, point: &[f64]) -> Result<f64, GeometryError> {
    Ok(metric_at(spec, point)?.curvature().scalar)
}

/// Gaussian curvature of the coordinate 2-surface spanned by axes `u`, `v`
/// (other coordinates frozen), by the Brioschi formula.
pub fn brioschi_k(pm: &PointMetric, u: usize, v: usize) -> f64 {
    let e = pm.g[(u, u)];
    let f = pm.g[(u, v)];
    let g = pm.g[(v, v)];
    let (e_u, e_v) = (pm.d(u, u, u), pm.d(v, u, u));
    let (f_u, f_v) = (pm.d(u, u, v), pm.d(v, u, v));
    let (g_u, g_v) = (pm.d(u, v, v), pm.d(v, v, v));
    let e_vv = pm.dd(v, v, u, u);
    let f_uv = pm.dd(u, v, u, v);
    let g_uu = pm.dd(u, u, v, v);
    let m1 = nalgebra::Matrix3::new(
        -0.5 * e_vv + f_uv - 0.5 * g_uu,
        0.5 * e_u,
        f_u - 0.5 * e_v,
        f_v - 0.5 * g_u,
        e,
        f,
        0.5 * g_v,
        f,
        g,
    );
    let m2 = nalgebra::Matrix3::new(0.0, 0.5 * e_v, 0.5 * g_u, 0.5 * e_v, e, f, 0.5 * g_u, f, g);
    let w = e * g - f * f;
    (m1.determinant() - m2.determinant()) / (w * w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_metric_spec;

    fn polar_plane() -> MetricSpec {
        parse_metric_spec(r#"{"coords":["r","p"],"components":{"r,r":"1","p,p":"r^2"}}"#).unwrap()
    }

    fn round_sphere() -> MetricSpec {
        parse_metric_spec(
            r#"{"coords":["theta","phi"],
                "topology":{"theta":{"kind":"polar","partner":"phi"},"phi":{"kind":"periodic","period":6.283185307179586}},
                "components":{"theta,theta":"1","phi,phi":"sin(theta)^2"}}"#,
        )
        .unwrap()
    }

    #[test]
    fn polar_plane_christoffel() {
        let pm = metric_at(&polar_plane(), &[2.0, 0.3]).unwrap();
        let ch = pm.christoffel();
        assert!((ch.get(0, 1, 1) + 2.0).abs() < 1e-14);
        assert!((ch.get(1, 0, 1) - 0.5).abs() < 1e-14);
        assert!(pm.curvature().scalar.abs() < 1e-12);
    }

    #[test]
    fn sphere_equator_christoffel_vanishes() {
        let pm = metric_at(&round_sphere(), &[std::f64::consts::FRAC_PI_2, 1.0]).unwrap();
        let ch = pm.christoffel();
        assert!(ch.get(0, 1, 1).abs() < 1e-15);
        assert!(ch.get(1, 0, 1).abs() < 1e-15);
    }

    #[test]
    fn round_sphere_scalar_two() {
        let s = round_sphere();
        for th in [0.1, 0.7, 1.5, 2.9] {
            assert!((scalar_curvature(&s, &[th, 0.2]).unwrap() - 2.0).abs() < 1e-12);
            let pm = metric_at(&s, &[th, 0.2]).unwrap();
            assert!((brioschi_k(&pm, 0, 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn not_spd_reports_eigenvalue() {
        let s = parse_metric_spec(r#"{"coords":["a","b"],"components":{"a,a":"1","b,b":"1","a,b":"2"}}"#).unwrap();
        match metric_at(&s, &[0.0, 0.0]) {
            Err(GeometryError::NotPositiveDefinite { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sphere_riemann_norm() {
        // constant curvature 1 in dimension 2: |Rm|^2 = 2 n (n-1) = 4
        let pm = metric_at(&round_sphere(), &[0.9, 0.0]).unwrap();
        let c = pm.curvature();
        assert!((c.riemann_norm_sq(&pm) - 4.0).abs() < 1e-12);
    }
}
