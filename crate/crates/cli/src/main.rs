use std::process::ExitCode;

use vipr_cli::{parse, run, Parsed};

fn main() -> ExitCode {
    let argv: Vec<_> = std::env::args_os().collect();
    let result = parse(&argv).and_then(|parsed| match parsed {
        Parsed::Run(cli) => {
            env_logger::Builder::new().parse_filters(&cli.log_level).init();
            run(cli).map(|_| ExitCode::SUCCESS)
        }
        Parsed::Exit(e) => {
            let _ = e.print();
            Ok(ExitCode::from(e.exit_code() as u8))
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
