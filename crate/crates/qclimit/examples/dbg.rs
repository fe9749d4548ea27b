use qclimit::experiments::*;
use qclimit::linalg::{lowest_eigenpairs, EigenOptions};
use qclimit::schrodinger::assemble_effective;
use qclimit::measures::{effective_fields_eps};
use qclimit::grid::ParticleGrid;

fn main() {
    let text = std::fs::read_to_string("/tmp/qctest/conv.toml").unwrap();
    let cfg = ExperimentConfig::from_str_auto(&text).unwrap();
    // replicate the row pipeline at the largest eps
    let ms = qclimit::field_model::build_mode_set(2, &[1.0], 2, &qclimit::field_model::DispersionRule::Massless).unwrap();
    let grid = ParticleGrid::new(2, 1, 1, 1.0, 64).unwrap();
    let ff = qclimit::field_model::FormFactor::gaussian_charge(1, 1.0, vec![0.5, 0.5]);
    for eps in [0.25f64, 0.015625] {
        let (fs, state) = {
            // coherent z from cfg
            let z = vec![num_complex::Complex64::new(0.3, 0.1), num_complex::Complex64::new(-0.2, 0.2)];
            let mean = z.iter().map(|c| c.norm_sqr()).sum::<f64>() / eps;
            let n_max = qclimit::fock::poisson_required_n_max(mean, 1e-10) + 6;
            let fs = qclimit::fock::FockSpace::new(2, n_max, eps).unwrap();
            let st = qclimit::fock::coherent_state(&fs, &qclimit::fock::CoherentSpec { z }, 1e-10).unwrap();
            (fs, st)
        };
        let fields = effective_fields_eps(&state, &fs, &ff, &ms, &grid).unwrap();
        let op = assemble_effective(&fields, &qclimit::schrodinger::Potential::zero(), &grid).unwrap();
        let t0 = std::time::Instant::now();
        let r = lowest_eigenpairs(&op, 2, &EigenOptions { tol: 1e-9, seed: 42, ..Default::default() });
        match r {
            Ok(res) => println!("eps={eps}: values {:?} residuals {:?} applies {} ({:?})", res.values, res.residuals, res.iterations, t0.elapsed()),
            Err(e) => println!("eps={eps}: ERROR {e}"),
        }
    }
    let _ = cfg;
}
