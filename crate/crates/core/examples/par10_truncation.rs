//! PAR10 scores of a small runtime matrix, re-derived at shorter timeouts.

use csp_portfolio::perf::{format_ms, RunRecord, RunStatus, RuntimeMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = "\
# timeout_s=60
instance_id,solver_id,status,runtime_s
easy,a,solved,0.4
easy,b,solved,2.5
medium,a,solved,12
medium,b,solved,45
hard,a,timeout,60
hard,b,crashed,3.1
";
    let m = RuntimeMatrix::read_csv(text.as_bytes())?;
    for t in [60_000, 30_000, 10_000, 1_000] {
        let cut = m.truncate(t)?;
        let par10 = m.par10_table(t)?;
        let solved = cut.records().iter().filter(|r| r.status == RunStatus::Solved).count();
        let sums: Vec<String> = (0..par10.num_solvers())
            .map(|s| format!("{}={}", par10.solvers[s], format_ms(par10.column_sum(s))))
            .collect();
        println!("t={:>4}s  solved pairs {solved}  par10 sums {}", format_ms(t), sums.join(" "));
    }
    let r = RunRecord { instance_id: "x".into(), solver_id: "a".into(), status: RunStatus::Solved, runtime_ms: 12_000 };
    println!("12 s run at 10 s timeout scores {} s", format_ms(csp_portfolio::perf::par10_ms(&r, 10_000, 60_000)?));
    let mut out = Vec::new();
    m.truncate(10_000)?.write_csv(&mut out)?;
    print!("\n{}", String::from_utf8(out)?);
    Ok(())
}
