use std::process::ExitCode;

fn main() -> ExitCode {
    match sparse_vote::cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // clap renders its own help/usage output
            if let Some(clap_err) = e.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return if clap_err.use_stderr() {
                    ExitCode::FAILURE
                } else {
                    ExitCode::SUCCESS
                };
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
