use std::io::Write;

fn main() {
    let out = causal_hjb_cli::run(std::env::args_os());
    if let Some(text) = &out.stdout {
        let _ = std::io::stdout().write_all(text.as_bytes());
    }
    if let Some(err) = &out.error {
        eprintln!("error: {err}");
    }
    std::process::exit(out.code);
}
