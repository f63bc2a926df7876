fn main() {
    std::process::exit(robust_agg_cli::run_cli(std::env::args_os()));
}
