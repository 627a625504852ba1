//! Matrix exponential by scaling and squaring with diagonal Pade approximants.
//!
//! Follows Higham, "The Scaling and Squaring Method for the Matrix Exponential
//! Revisited": choose the [m/m] Pade degree from the 1-norm, scale by a power
//! of two when the norm exceeds the degree-13 threshold, square back up.
//! For the <=5x5 matrices used here this is backward stable and cheap.

use super::linsolve::solve_lu;
use super::mat::Mat;
use crate::error::NumericsError;

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

pub fn expm(a: &Mat) -> Result<Mat, NumericsError> {
    assert!(a.is_square(), "expm needs a square matrix");
    if !a.is_finite() {
        return Err(NumericsError::NonFinite {
            context: "expm input".into(),
        });
    }
    let norm = a.norm_l1();
    let (u, v, squarings) = if norm < THETA_3 {
        let (u, v) = pade(a, &[120.0, 60.0, 12.0, 1.0]);
        (u, v, 0)
    } else if norm < THETA_5 {
        let (u, v) = pade(a, &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0]);
        (u, v, 0)
    } else if norm < THETA_7 {
        let (u, v) = pade(
            a,
            &[
                17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
            ],
        );
        (u, v, 0)
    } else if norm < THETA_9 {
        let (u, v) = pade(
            a,
            &[
                17643225600.0,
                8821612800.0,
                2075673600.0,
                302702400.0,
                30270240.0,
                2162160.0,
                110880.0,
                3960.0,
                90.0,
                1.0,
            ],
        );
        (u, v, 0)
    } else {
        let squarings = ((norm / THETA_13).log2().ceil() as i32).max(0);
        let scaled = a.scale(2f64.powi(-squarings));
        let (u, v) = pade13(&scaled);
        (u, v, squarings)
    };

    // Pade approximant is (V+U) / (V-U).
    let numer = &v + &u;
    let denom = &v - &u;
    let mut result = solve_lu(&denom, &numer)?;
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    Ok(result)
}

fn pade(a: &Mat, b: &[f64]) -> (Mat, Mat) {
    // b holds the Pade coefficients b_0..b_m. Odd powers go into U, even into V.
    let n = a.rows();
    let a2 = a.matmul(a);
    let mut even = Mat::identity(n).scale(b[0]);
    let mut odd = Mat::identity(n).scale(b[1]);
    let mut pow = Mat::identity(n); // a^(2k)
    for k in 1..=(b.len() - 1) / 2 {
        pow = pow.matmul(&a2);
        even.axpy(b[2 * k], &pow);
        if 2 * k + 1 < b.len() {
            odd.axpy(b[2 * k + 1], &pow);
        }
    }
    (a.matmul(&odd), even)
}

fn pade13(a: &Mat) -> (Mat, Mat) {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.rows();
    let ident = Mat::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut u_inner = a6.scale(B[13]);
    u_inner.axpy(B[11], &a4);
    u_inner.axpy(B[9], &a2);
    let mut u = a6.matmul(&u_inner);
    u.axpy(B[7], &a6);
    u.axpy(B[5], &a4);
    u.axpy(B[3], &a2);
    u.axpy(B[1], &ident);
    let u = a.matmul(&u);

    let mut v_inner = a6.scale(B[12]);
    v_inner.axpy(B[10], &a4);
    v_inner.axpy(B[8], &a2);
    let mut v = a6.matmul(&v_inner);
    v.axpy(B[6], &a6);
    v.axpy(B[4], &a4);
    v.axpy(B[2], &a2);
    v.axpy(B[0], &ident);
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_matrix_gives_identity() {
        let e = expm(&Mat::zeros(4, 4)).unwrap();
        assert_eq!(e.max_abs_diff(&Mat::identity(4)), 0.0);
    }

    #[test]
    fn scalar_case_matches_exp() {
        for x in [-3.0, -0.1, 0.0, 0.5, 2.0, 10.0] {
            let e = expm(&Mat::from_rows(&[&[x]])).unwrap();
            assert!((e[(0, 0)] - x.exp()).abs() < 1e-12 * x.exp().max(1.0));
        }
    }

    #[test]
    fn idempotent_matrix_short_circuit() {
        // For P with P^n = P, exp(tP) = I + (e^t - 1) P.
        let p = Mat::from_rows(&[&[1.0, 1.0], &[0.0, 0.0]]);
        assert!(p.matmul(&p).max_abs_diff(&p) < 1e-15);
        for t in [0.25, 1.0, 3.0] {
            let e = expm(&p.scale(t)).unwrap();
            let mut expected = Mat::identity(2);
            expected.axpy(t.exp() - 1.0, &p);
            assert!(e.max_abs_diff(&expected) < 1e-12 * t.exp());
        }
    }

    #[test]
    fn nilpotent_matrix_truncates() {
        // N^2 = 0 gives exp(N) = I + N exactly.
        let n = Mat::from_rows(&[&[0.0, 5.0], &[0.0, 0.0]]);
        let e = expm(&n).unwrap();
        let mut expected = Mat::identity(2);
        expected.axpy(1.0, &n);
        assert!(e.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn commuting_pair_multiplies() {
        // A and B commute when both are polynomials in the same matrix.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut m = Mat::zeros(4, 4);
            for i in 0..4 {
                for j in 0..4 {
                    m[(i, j)] = rng.gen_range(-0.6..0.6);
                }
            }
            let m2 = m.matmul(&m);
            let mut a = m.scale(rng.gen_range(-1.0..1.0));
            a.axpy(rng.gen_range(-0.5..0.5), &m2);
            let mut b = m.scale(rng.gen_range(-1.0..1.0));
            b.axpy(rng.gen_range(-0.5..0.5), &Mat::identity(4));
            let lhs = expm(&(&a + &b)).unwrap();
            let rhs = expm(&a).unwrap().matmul(&expm(&b).unwrap());
            assert!(
                lhs.max_abs_diff(&rhs) < 1e-10 * rhs.norm_max().max(1.0),
                "commuting product mismatch: {}",
                lhs.max_abs_diff(&rhs)
            );
        }
    }

    #[test]
    fn large_norm_path_squares_back() {
        // 2x2 with known closed form: rotation-scaling matrix.
        let a = Mat::from_rows(&[&[0.0, 20.0], &[-20.0, 0.0]]);
        let e = expm(&a).unwrap();
        let expected = Mat::from_rows(&[
            &[20.0_f64.cos(), 20.0_f64.sin()],
            &[-(20.0_f64.sin()), 20.0_f64.cos()],
        ]);
        assert!(e.max_abs_diff(&expected) < 1e-11);
    }
}
