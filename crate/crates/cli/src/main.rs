fn main() {
    std::process::exit(stagedur_cli::run_cli(std::env::args_os()));
}
