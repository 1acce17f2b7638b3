use nalgebra::{DMatrix, DVector};

/// Quadratic f(x) = x'Ax + b'x + c recovered from evaluations.
pub struct Quad {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

pub fn polarize(dim: usize, f: &dyn Fn(&DVector<f64>) -> f64) -> Quad {
    let e = |i: usize, s: f64| {
        let mut v = DVector::zeros(dim);
        v[i] = s;
        v
    };
    let c = f(&DVector::zeros(dim));
    let fp: Vec<f64> = (0..dim).map(|i| f(&e(i, 1.0))).collect();
    let fm: Vec<f64> = (0..dim).map(|i| f(&e(i, -1.0))).collect();
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    for i in 0..dim {
        a[(i, i)] = (fp[i] + fm[i]) / 2.0 - c;
        b[i] = (fp[i] - fm[i]) / 2.0;
        for j in 0..i {
            let mut v = e(i, 1.0);
            v[j] = 1.0;
            let aij = (f(&v) - fp[i] - fp[j] + c) / 2.0;
            a[(i, j)] = aij;
            a[(j, i)] = aij;
        }
    }
    Quad { a, b, c }
}

/// Stationary point of x'Ax + b'x + c.
pub fn stationary(q: &Quad) -> DVector<f64> {
    q.a.clone().lu().solve(&(-&q.b * 0.5)).expect("oracle system singular")
}

/// Maximum of a concave quadratic.
pub fn quad_max(q: &Quad) -> f64 {
    let x = stationary(q);
    x.dot(&(&q.a * &x)) + q.b.dot(&x) + q.c
}
