fn main() {
    std::process::exit(csp_portfolio::cli::run(std::env::args_os()));
}
