//! Removal of the measurement-system response from raw VNA sweeps.

use crate::error::{Error, Result};
use crate::forward::{RawSweep, SystemResponse};
use crate::types::Ctf;

/// `H = S21_measure / (S21_extra * S21_connect)`, bin by bin.
///
/// Fails on the first frequency bin whose combined response magnitude is
/// below [`SystemResponse::MIN_MAGNITUDE`].
pub fn calibrate(raw: &RawSweep, sys: &SystemResponse) -> Result<Ctf> {
    let meas = raw.ctf();
    if sys.len() != meas.n_points() {
        return Err(Error::Dimension(format!(
            "system response has {} points, sweep has {}",
            sys.len(),
            meas.n_points()
        )));
    }
    let denom = sys.combined();
    if let Some((index, z)) = denom
        .iter()
        .enumerate()
        .find(|(_, z)| !(z.norm() >= SystemResponse::MIN_MAGNITUDE))
    {
        return Err(Error::SingularResponse {
            index,
            magnitude: z.norm(),
        });
    }
    let inv: Vec<_> = denom.iter().map(|z| z.inv()).collect();
    let mut h = meas.clone();
    for row in h.data_mut().chunks_exact_mut(inv.len()) {
        for (x, d) in row.iter_mut().zip(&inv) {
            *x *= d;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::apply_system_response;
    use crate::types::{FrequencyGrid, SteeringGrid};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ctf(rng: &mut ChaCha8Rng, k: usize) -> Ctf {
        let grid = FrequencyGrid::new(306e9, 2.5e6, k).unwrap();
        let steering = SteeringGrid::standard();
        let h = (0..steering.len() * k)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Ctf::new(grid, steering, h).unwrap()
    }

    #[test]
    fn identity_response_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_ctf(&mut rng, 16);
        let out = calibrate(&RawSweep(h.clone()), &SystemResponse::identity(16)).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn round_trip_with_forward_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_ctf(&mut rng, 64);
        let mut draw = || {
            (0..64)
                .map(|_| Complex64::from_polar(rng.gen_range(0.01..10.0), rng.gen_range(-3.0..3.0)))
                .collect::<Vec<_>>()
        };
        let sys = SystemResponse::new(draw(), draw()).unwrap();
        let back = calibrate(&apply_system_response(&h, &sys).unwrap(), &sys).unwrap();
        for (a, b) in back.data().iter().zip(h.data()) {
            assert!((a - b).norm() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn zero_in_connect_response_names_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_ctf(&mut rng, 8);
        let mut connect = vec![Complex64::new(1.0, 0.0); 8];
        connect[5] = Complex64::new(0.0, 0.0);
        let sys = SystemResponse::from_parts_unchecked(connect, vec![Complex64::new(1.0, 0.0); 8]);
        match calibrate(&RawSweep(h), &sys) {
            Err(Error::SingularResponse { index, .. }) => assert_eq!(index, 5),
            other => panic!("expected singular response, got {other:?}"),
        }
        assert!(SystemResponse::from_connect(vec![Complex64::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn calibration_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_ctf(&mut rng, 8);
        let b = random_ctf(&mut rng, 8);
        let sys =
            SystemResponse::from_connect((0..8).map(|i| Complex64::new(1.0 + i as f64, 0.5)).collect()).unwrap();
        let sum = Ctf::new(
            *a.grid(),
            a.steering().clone(),
            a.data().iter().zip(b.data()).map(|(x, y)| x + 2.0 * y).collect(),
        )
        .unwrap();
        let ca = calibrate(&RawSweep(a), &sys).unwrap();
        let cb = calibrate(&RawSweep(b), &sys).unwrap();
        let cs = calibrate(&RawSweep(sum), &sys).unwrap();
        for ((s, x), y) in cs.data().iter().zip(ca.data()).zip(cb.data()) {
            assert!((s - (x + 2.0 * y)).norm() < 1e-12 * s.norm().max(1.0));
        }
    }
}
