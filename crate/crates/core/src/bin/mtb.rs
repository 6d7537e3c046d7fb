use std::io;

fn main() {
    let seed = std::env::var("MTB_SEED").ok();
    let code = microtensile::cli_io::run(
        std::env::args_os(),
        seed.as_deref(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}
