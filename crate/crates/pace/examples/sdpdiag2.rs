use nalgebra::Vector3;
use pace::core::*;
use pace::pace3d::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 10usize;
    let k = 3usize;
    let lib = ShapeLibrary::new(
        (0..k)
            .map(|_| (0..n).map(|_| Vector3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng))).collect())
            .collect(),
    ).unwrap();
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let rot = Rotation::new(*q.to_rotation_matrix().matrix()).unwrap();
    let t = Vector3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng));
    let mut c: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    let s: f64 = c.iter().sum();
    c.iter_mut().for_each(|x| *x /= s);
    let pts: Vec<Vector3<f64>> = (0..n).map(|i| rot.apply(&lib.blend(&c, i)) + t).collect();
    let meas = Keypoints3D::uniform(pts).unwrap();
    let cd = center_data(&lib, &meas).unwrap();
    let qcqp = assemble_rotation_qcqp(&cd, 0.01).unwrap();
    println!("Q norm: {}", qcqp.q.norm());
    let prob = rotation_sdp(&qcqp);
    match pace::optkernels::solve_sdp(&prob, 1e-9) {
        Ok(sol) => println!("OK status {:?} iters {} obj {} gap {:e}", sol.status, sol.iterations, sol.objective, sol.kkt.comp_gap),
        Err(e) => println!("ERR {e}"),
    }
}
