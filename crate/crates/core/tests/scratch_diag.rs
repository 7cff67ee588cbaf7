//! Scratch diagnosis of CDL failures. Deleted before commit.
use sbd_core::experiments::{synth, ActivationModel, KernelModel, SynthSpec};
use sbd_core::extensions::{bank_config, cdl_solve, match_bank};
use sbd_core::signal::{Dims, Signal};
use sbd_core::solver::best_window;
use std::time::Instant;

fn mixture(m: usize, k: usize, theta: f64, run: u64) -> (Vec<sbd_core::experiments::SynthInstance>, Signal) {
    let insts: Vec<_> = (0..3)
        .map(|b| {
            synth(&SynthSpec {
                m: Dims::One(m),
                k: Dims::One(k),
                activation: ActivationModel::Bernoulli(theta),
                kernel: KernelModel::RandomUnitGaussian,
                noise_sigma: 0.0,
                seed: 1000 * run + b as u64,
            })
            .unwrap()
        })
        .collect();
    let mut sum = vec![0.0; m];
    for i in &insts {
        for (s, v) in sum.iter_mut().zip(i.y.as_slice()) {
            *s += v;
        }
    }
    (insts, Signal::new(sum, Dims::One(m)).unwrap())
}

#[test]
fn diag_cdl_ten_runs() {
    let (m, k, theta) = (2048usize, 16usize, 0.005f64);
    let mut ok = 0;
    let t_all = Instant::now();
    for run in 0..10u64 {
        let (insts, y) = mixture(m, k, theta, run);
        let truths: Vec<_> = insts.iter().map(|i| i.a0.clone()).collect();
        let mut cfg = bank_config(&y, Dims::One(k), 3, run).unwrap();
        cfg.lambda_min = cfg.lambda0 / 16.0;
        cfg.mu = cfg.lambda_min / 10.0;
        let t = Instant::now();
        match cdl_solve(&y, 3, &cfg) {
            Ok(res) => {
                let matches = match_bank(&res.aligned.kernels, &truths).unwrap();
                let errs: Vec<f64> = matches.iter().map(|(_, e)| e.l2).collect();
                let idx: Vec<usize> = matches.iter().map(|(j, _)| *j).collect();
                let good = errs.iter().all(|&e| e <= 0.05);
                ok += good as usize;
                eprintln!("[run {run}] {:?} errs {errs:?} assign {idx:?} good {good}", t.elapsed());
            }
            Err(sbd_core::SbdError::BankNoConvergence { grad_norm, bank, .. }) => {
                let wins: Vec<_> = bank.iter().map(|a| best_window(a, Dims::One(k)).unwrap()).collect();
                let matches = match_bank(&wins, &truths).unwrap();
                let errs: Vec<f64> = matches.iter().map(|(_, e)| e.l2).collect();
                eprintln!("[run {run}] {:?} EXHAUSTED g={grad_norm:.1e} errs {errs:?}", t.elapsed());
            }
            Err(e) => eprintln!("[run {run}] {:?} ERR {e}", t.elapsed()),
        }
    }
    eprintln!("[total] {ok}/10 in {:?}", t_all.elapsed());
}
