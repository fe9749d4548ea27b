//! Command-line front end: run the convergence, uniform-field and
//! ground-state experiments from a TOML or JSON config, or a quick
//! self-test. Exit codes: 0 ok, 1 numerical failure, 2 i/o, 3 config.

use clap::{Parser, Subcommand};
use qclimit::experiments::{
    emit_report, run_convergence, run_ground_state, run_uniform_field, ExperimentConfig, Report,
    ReportFormat,
};
use qclimit::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qclimit", version, about = "Quasi-classical limit laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// eps-sweep of the partial-trace operator against its effective limit.
    Convergence {
        #[arg(long)]
        config: PathBuf,
    },
    /// Synthesize a uniform magnetic field from displaced-vacuum states.
    UniformField {
        #[arg(long)]
        config: PathBuf,
    },
    /// Ground-state energy of the coupled operator vs the classical infimum.
    GroundState {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fast internal consistency checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Convergence { config } => run(&config, |cfg| {
            run_convergence(cfg).map(Report::Convergence)
        }),
        Command::UniformField { config } => run(&config, |cfg| {
            run_uniform_field(cfg).map(Report::UniformField)
        }),
        Command::GroundState { config } => run(&config, |cfg| {
            run_ground_state(cfg).map(Report::GroundState)
        }),
        Command::Selftest => return selftest(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(
    config_path: &PathBuf,
    driver: impl Fn(&ExperimentConfig) -> Result<Report, Error>,
) -> Result<(), Error> {
    let cfg = ExperimentConfig::from_path(config_path)?;
    let report = driver(&cfg)?;
    let dir = PathBuf::from(&cfg.output.dir);
    let mut written = emit_report(&report, ReportFormat::Csv, &dir)?;
    written.extend(emit_report(&report, ReportFormat::Json, &dir)?);
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::DimensionMismatch(_) => 3,
        Error::Io(_) | Error::Serde(_) => 2,
        _ => 1,
    }
}

fn selftest() -> ExitCode {
    use num_complex::Complex64 as C64;
    use qclimit::field_model::{build_mode_set, DispersionRule, FormFactor};
    use qclimit::fock::{
        annihilation, coherent_state, creation, CoherentSpec, FockSpace, DEFAULT_TAIL_TOL,
    };
    use qclimit::linalg::dot;
    use qclimit::wick::{quantize, PolySymbol};

    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Scaled commutator on a small space.
    {
        let fs = FockSpace::new(2, 6, 0.25).expect("space");
        let f = [C64::new(0.4, -0.1), C64::new(0.2, 0.7)];
        let g = [C64::new(-0.3, 0.5), C64::new(1.0, 0.0)];
        let a = annihilation(&fs, &f).expect("a");
        let c = creation(&fs, &g).expect("c");
        let comm = a
            .matrix
            .matmul(&c.matrix)
            .add(&c.matrix.matmul(&a.matrix).scaled(C64::new(-1.0, 0.0)));
        let fg: C64 = f.iter().zip(&g).map(|(x, y)| x.conj() * y).sum();
        let mut worst: f64 = 0.0;
        for (i, n) in fs.basis().iter().enumerate() {
            if n.iter().sum::<u32>() as usize > fs.n_max() - 1 {
                continue;
            }
            let mut e = vec![C64::default(); fs.dim()];
            e[i] = C64::new(1.0, 0.0);
            let out = comm.apply(&e);
            for (j, v) in out.iter().enumerate() {
                let want = if i == j { fg * 0.25 } else { C64::default() };
                worst = worst.max((v - want).norm());
            }
        }
        check("scaled commutation relations", worst <= 1e-13);
    }

    // Quantization correspondences.
    {
        let fs = FockSpace::new(2, 5, 0.2).expect("space");
        let xi = [C64::new(0.3, 0.4), C64::new(-0.2, 0.1)];
        let q = quantize(&fs, &PolySymbol::annihilation_symbol(&xi)).expect("q");
        let a = annihilation(&fs, &xi).expect("a");
        let diff = q.matrix.add(&a.matrix.scaled(C64::new(-1.0, 0.0)));
        check("quantization reproduces the lowering operator", diff.nnz() == 0);
    }

    // Coherent expectation contract.
    {
        let fs = FockSpace::new(1, 30, 0.2).expect("space");
        let xi = coherent_state(&fs, &CoherentSpec { z: vec![C64::new(0.5, -0.3)] }, DEFAULT_TAIL_TOL)
            .expect("coherent");
        let a = annihilation(&fs, &[C64::new(1.0, 0.0)]).expect("a");
        let e = dot(&xi.data, &a.apply(&xi.data));
        check(
            "coherent lowering expectation",
            (e - C64::new(0.5, -0.3)).norm() <= 1e-9,
        );
    }

    // Gauge structure of the plane-wave coupling.
    {
        let ms = build_mode_set(2, &[0.8, 1.3], 4, &DispersionRule::Massless).expect("modes");
        let ff = FormFactor::gaussian_charge(1, 1.0, vec![0.0, 0.0]);
        let res = qclimit::field_model::gauge_residual(&ms, &ff, &[vec![0.3, 0.6]]);
        check("transverse gauge residual", res <= 1e-8);
        check("polarization completeness", ms.completeness_defect() <= 1e-12);
    }

    if failures == 0 {
        println!("selftest: all checks passed");
        ExitCode::SUCCESS
    } else {
        println!("selftest: {failures} check(s) failed");
        ExitCode::from(1)
    }
}
