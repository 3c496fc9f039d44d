use std::process::ExitCode;
use std::time::Instant;

use simswipt::harness::validate::{self, Check};
use simswipt_acceptance::{DIRECTION_REALIZATIONS, ORACLE_TRIALS, SCA_RUNS, SEED};

fn main() -> ExitCode {
    let mut checks: Vec<Check> = Vec::new();
    let mut record = |c: simswipt::Result<Check>| match c {
        Ok(c) => {
            println!("{}", c.line());
            checks.push(c);
        }
        Err(e) => panic!("criterion aborted: {e}"),
    };

    record(validate::criterion_1("acceptance"));

    let oc = validate::oracle_config(SEED, ORACLE_TRIALS);
    let cmp = validate::oracle_comparison(&oc).expect("oracle comparison");
    record(validate::criterion_2(&oc.hash(), &cmp));
    record(validate::criterion_3(&oc.hash(), &cmp));

    record(validate::criterion_4());
    record(validate::criterion_5(SEED));

    let sc = validate::sca_config(SEED);
    let t0 = Instant::now();
    let runs = validate::sca_runs(&sc, SCA_RUNS).expect("SCA runs");
    record(validate::criterion_6(&sc.hash(), &runs, t0.elapsed()));
    record(validate::criterion_7(&runs));

    record(validate::criterion_8(&validate::drl_config(SEED)));
    record(validate::criterion_9(SEED));
    record(validate::criterion_10(&validate::direction_config(SEED, DIRECTION_REALIZATIONS)));

    for r in &cmp.alpha {
        println!(
            "INFO alpha {} {}: large-antenna {:.4e}, monte carlo {:.4e}, ratio {:.3}",
            r.receiver,
            r.term,
            r.closed_form,
            r.mc_mean,
            r.closed_form / r.mc_mean
        );
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    println!("acceptance: {passed}/{} criteria pass", checks.len());
    if passed == checks.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
