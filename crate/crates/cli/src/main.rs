use std::io::Write;
use std::process::ExitCode;

// Deep terms are walked recursively in places; give the workers room.
const STACK: usize = 512 << 20;

fn main() -> ExitCode {
    let _ = rayon::ThreadPoolBuilder::new().stack_size(STACK / 4).build_global();
    let args: Vec<_> = std::env::args_os().collect();
    let worker = std::thread::Builder::new().stack_size(STACK).spawn(move || exemplar_cli::run(args));
    let code = match worker.map(|h| h.join()) {
        Ok(Ok(Ok(done))) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(done.stdout.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(3);
            }
            done.code
        }
        Ok(Ok(Err(failure))) => {
            eprint!("{}", failure.message());
            if !failure.message().ends_with('\n') {
                eprintln!();
            }
            failure.exit_code()
        }
        // a panic already printed its message
        Ok(Err(_)) => 3,
        Err(e) => {
            eprintln!("cannot start: {e}");
            3
        }
    };
    ExitCode::from(code as u8)
}
