use std::process::ExitCode;

fn main() -> ExitCode {
    let report = home_core::acceptance::run_all();
    for line in report.lines() {
        println!("{line}");
    }
    if report.passed() {
        println!("acceptance: all {} criteria passed", report.criteria.len());
        ExitCode::SUCCESS
    } else {
        let failed = report.criteria.iter().filter(|c| !c.passed).count();
        println!(
            "acceptance: {failed} of {} criteria failed",
            report.criteria.len()
        );
        ExitCode::FAILURE
    }
}
