fn main() {
    std::process::exit(thinphase_cli::run(std::env::args_os()));
}
