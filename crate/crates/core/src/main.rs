fn main() {
    std::process::exit(zrp::experiments::cli::run_cli(std::env::args_os()));
}
